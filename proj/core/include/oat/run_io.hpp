#pragma once

#include "oat/corruption.hpp"
#include "oat/trainer.hpp"

#include <filesystem>
#include <fstream>
#include <string>

namespace oat {

/// Run directory layout:
///   config.json                 full TrainConfig
///   metrics.jsonl               one EpochRecord per line
///   oracle.jsonl                oracle epoch records (OAT only)
///   distribution_epoch_<n>.csv  class,prior_count,estimated_count,gt_count
///   best/ last/                 AT-model checkpoints plus state.json
class RunWriter {
 public:
  RunWriter(std::filesystem::path dir, const TrainConfig& config);

  void append(const EpochRecord& rec);
  void append_abort(int epoch, const std::string& reason);
  void save(const std::string& name, const Checkpoint& ckpt) const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::ofstream metrics_;
  std::ofstream oracle_;
};

void write_distribution_csv(const std::filesystem::path& file, const EpochRecord& rec);

/// Checkpoint directory written by RunWriter::save.
Checkpoint load_run_checkpoint(const std::filesystem::path& dir);

/// corruption.json next to a corrupted dataset: spec plus realized ratios.
void write_provenance(const std::filesystem::path& dir, const CorruptionSpec& spec,
                      const CorruptionResult& result);

enum class ReportFormat { csv, json };

/// Aggregates a run directory (metrics.jsonl + distribution CSVs) or a corrupted
/// dataset directory (corruption.json). Ratios are emitted as percentages
/// rounded to two decimals.
std::string report(const std::filesystem::path& dir, ReportFormat format);

}  // namespace oat
