#pragma once

#include <memory>
#include <string>
#include <vector>

#include "kae/dataset.hpp"
#include "kae/losses.hpp"
#include "kae/metrics.hpp"
#include "kae/model.hpp"
#include "kae/optim.hpp"

namespace kae {

struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  AdamConfig adam;
  int batch_size = 256;
  int epochs = 10;
  std::uint64_t seed = 0;
  std::string dataset_path;
  std::string out_dir = ".";
  // conditional runs: dataset column name, or empty for the toy descriptor
  std::string property_column;
  double noise_scale = 1.0;
  int eval_samples = 1000;
  int eval_beam = 1;
  int eval_repeats = 1;
  SplitRatios ratios;

  void validate() const;
};

// stable fingerprint of the serialized config, embedded in every artifact
std::string config_digest(const RunConfig& cfg);
std::string run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::string& path);

// the eval stream both the trainer and the standalone metrics run derive
Rng eval_rng(std::uint64_t seed, int epoch);

// per-row conditions: dataset column when named, else the toy descriptor
std::vector<double> conditions_for(const std::vector<DatasetRecord>& records,
                                   const std::string& property_column);

struct EpochRecord {
  int epoch = 0;
  double mean_total = 0.0;
  MetricsRecord metrics;
};

struct TrainResult {
  std::unique_ptr<KaeModel> model;
  std::unique_ptr<Adam> optimizer;
  std::vector<EpochRecord> epochs;
};

// light per-epoch validation shared by the trainer and the metrics command
MetricsRecord light_validation_metrics(const KaeModel& model,
                                       const std::set<std::string>& training,
                                       const std::vector<DatasetRecord>& validation,
                                       const std::string& property_column,
                                       int n_samples, int repeats, int beam,
                                       Rng& rng);

TrainResult train(const RunConfig& cfg, const DatasetSplit& data);

// exclusive ownership of an output directory while a subcommand writes it
class DirLock {
 public:
  explicit DirLock(const std::string& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
};

// fixed 17-significant-digit form used for all CSV bodies
std::string fmt_double(double x);

}  // namespace kae
