#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kae/dataset.hpp"
#include "kae/metrics.hpp"
#include "kae/oracle.hpp"
#include "kae/train.hpp"

namespace kae {

struct CorrelationPoint {
  double condition = 0.0;
  double mean_property = 0.0;
  int valid_count = 0;
};

struct CorrelationResult {
  std::vector<CorrelationPoint> points;
  bool r_defined = false;  // degenerate grids leave r undefined
  double r = 0.0;
};

double pearson(const std::vector<double>& xs, const std::vector<double>& ys,
               bool& defined);

// per grid point: sample n latents at that condition, beam-decode, average
// the oracle property over the valid generations
CorrelationResult correlation_experiment(const KaeModel& model,
                                         const PropertyOracle& oracle,
                                         const std::vector<double>& grid,
                                         int n_per_point, int beam,
                                         const std::set<std::string>& training,
                                         Rng& rng);

enum class SweepKind { Lambda, Delta, Sigma, LossType, BeamSize };
SweepKind sweep_kind_from_name(const std::string& name);

struct SweepRow {
  std::string setting;
  MetricsRecord metrics;
};

// BeamSize evaluates one checkpoint per beam width; the other kinds continue
// training from the shared checkpoint for extra_epochs per setting
std::vector<SweepRow> sweep(SweepKind kind,
                            const std::vector<std::string>& grid,
                            const RunConfig& base, const DatasetSplit& data,
                            const std::string& checkpoint_path,
                            int extra_epochs);

struct PcaRow {
  std::string kind;  // gaussian | encoded | encoded_noisy
  double x = 0.0;
  double y = 0.0;
};

struct PcaResult {
  std::vector<PcaRow> rows;
  double eig1 = 0.0, eig2 = 0.0;
  // diagonal Mahalanobis distance to the Gaussian reference cloud
  double mean_mahalanobis_encoded = 0.0;
  double mean_mahalanobis_noisy = 0.0;
};

PcaResult latent_pca(const KaeModel& model,
                     const std::vector<std::string>& molecules,
                     const std::vector<double>* conditions, int n_gaussian,
                     Rng& rng);

struct ReconstructRow {
  std::string smiles;
  bool skipped = false;
  std::string skip_reason;
  bool match = false;
  std::string decoded;
};

struct ReconstructReport {
  std::vector<ReconstructRow> rows;
  int attempted = 0;
  int matched = 0;
  bool rate_defined = false;
  double rate = 0.0;
};

ReconstructReport reconstruct_report(const KaeModel& model,
                                     const std::vector<std::string>& inputs,
                                     const std::vector<double>* conditions);

}  // namespace kae
