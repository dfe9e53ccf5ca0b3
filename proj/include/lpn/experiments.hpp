#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "lpn/checkpoint.hpp"
#include "lpn/icnn.hpp"
#include "lpn/pnp.hpp"
#include "lpn/prior.hpp"
#include "lpn/training.hpp"

namespace lpn {

/// sign(x) max(|x| - lambda, 0)
double soft_threshold(double x, double lambda);

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// E[x | y] for x ~ Laplace(0, 1) and y = x + sigma N(0, 1). Throws
/// QuadratureError if the adaptive quadrature does not converge.
double laplace_posterior_mean(double y, double sigma);

struct MetricReport {
  double psnr = 0.0;  // dB, capped at kPsnrCap
  double mse = 0.0;
  double sup_error = 0.0;
  double peak = 1.0;
};

inline constexpr double kPsnrCap = 300.0;

/// 10 log10(peak^2 / mse), kPsnrCap when the inputs coincide.
double psnr(const Eigen::VectorXd& x, const Eigen::VectorXd& x_hat, double peak = 1.0);
MetricReport metrics(const Eigen::VectorXd& x, const Eigen::VectorXd& x_hat, double peak = 1.0);

enum class ExperimentName { laplacian, prior_sweep, deblur, compressed_sensing };
enum class SolverKind { admm, pgd };

std::string experiment_name(ExperimentName name);
ExperimentName experiment_from_name(const std::string& name);

struct GridSpec {
  double lo = -3.0;
  double hi = 3.0;
  int points = 121;
  Eigen::VectorXd values() const;
};

struct ExperimentSpec {
  ExperimentName name = ExperimentName::laplacian;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  IcnnArch arch;
  TrainConfig train;
  /// Load this network instead of training one.
  std::optional<std::filesystem::path> checkpoint;
  DataSource source = DataSource::laplacian(0.0, 1.0);
  /// Operator description (see operator_from_json); inverse problems only.
  nlohmann::json operator_spec;

  GridSpec grid;               // Laplacian curves
  double prior_band = 2.0;     // R compared with |x| on [-prior_band, prior_band]
  std::vector<double> noise_levels{0.0, 0.1, 0.2, 0.4};
  std::vector<double> lambdas;  // convex-combination weights
  int num_samples = 100;       // prior sweep pairs / inverse-problem test signals
  double measurement_noise = 0.0;
  SolverKind solver = SolverKind::admm;
  PnpConfig pnp;
  double inversion_tol = kDefaultInversionTol;
  int inversion_max_iters = kDefaultInversionIters;

  /// Throws std::invalid_argument on empty grids or a missing checkpoint file.
  void validate() const;

  /// Reference settings for each experiment; every field can then be
  /// overridden.
  static ExperimentSpec defaults(ExperimentName name, std::uint64_t seed = 0);
};

nlohmann::json spec_to_json(const ExperimentSpec& spec);
/// Starts from ExperimentSpec::defaults(name, seed) and overrides every key present.
ExperimentSpec spec_from_json(const nlohmann::json& j);

/// Smooth signals in [0, 1]^dim: a mixture of sinusoidal templates with small
/// isotropic spread.
DataSource smooth_signal_source(int dim, int components, double spread, std::uint64_t seed);

/// Two well-separated isotropic Gaussians in R^dim.
DataSource two_mode_source(int dim, double separation, double spread);

struct LaplacianModel {
  std::string name;  // "l2", "l1", "pm"
  IcnnParams params;
  double sup_error_soft = 0.0;    // vs soft_threshold on the grid
  double mean_error_soft = 0.0;
  double mean_error_posterior = 0.0;  // vs laplace_posterior_mean (sigma = train sigma)
  double prior_sup_distance = 0.0;    // normalized R vs |x| on the band
  std::size_t prior_failures = 0;
};

struct LaplacianReport {
  Eigen::VectorXd grid;
  std::vector<LaplacianModel> models;  // l2, l1, pm
  const LaplacianModel& model(const std::string& name) const;
};

/// Trains l2, l1 and proximal-matching LPNs on the spec's source. The l1 model
/// is the proximal-matching run's pretraining snapshot. Writes
/// laplacian_curves.csv, train_l2.csv, train_pm.csv, {l2,l1,pm}.ckpt and
/// summary.json into spec.output_dir.
LaplacianReport run_laplacian(const ExperimentSpec& spec);

/// Normalized R and prox-error metrics of an already trained 1-D model.
LaplacianModel evaluate_laplacian_model(const std::string& name, const IcnnParams& params, const IcnnArch& arch,
                                        const ExperimentSpec& spec);

struct SweepReport {
  std::vector<double> noise_levels;
  std::vector<double> noise_mean_r;  // mean normalized R per noise level
  std::vector<double> lambdas;
  std::vector<double> lambda_mean_r;
  std::size_t failures = 0;          // inversions that did not converge
  std::size_t lambda_argmax = 0;
  bool noise_increasing() const;
  bool interior_max(double lo = 0.2, double hi = 0.8) const;
};

/// Mean R over held-out samples perturbed by Gaussian noise, and along convex
/// combinations (1 - lambda) x + lambda x' of samples from different modes.
/// Values are offset by the minimum over all evaluated points. Writes
/// prior_vs_noise.csv, prior_vs_lambda.csv and summary.json.
SweepReport run_prior_sweep(const ExperimentSpec& spec, const Checkpoint& model);

struct InverseReport {
  MetricReport reconstruction;
  MetricReport measurement;  // A^T y (or y when square) vs truth
  KktResiduals kkt;
  PnpState state;
  Eigen::VectorXd x_true, y, x_hat;
  bool kkt_available = false;  // ADMM only
};

/// Builds the operator, draws one test signal from spec.source, measures it
/// with spec.measurement_noise, and runs the selected PnP solver. Writes
/// history.csv and summary.json.
InverseReport run_inverse_problem(const ExperimentSpec& spec, const Checkpoint& model);

/// Network for an experiment: spec.checkpoint when set, otherwise trained
/// with spec.train on spec.source (saved to output_dir/model.ckpt).
Checkpoint obtain_model(const ExperimentSpec& spec);

/// Summary JSON helpers shared by the CLI.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& log);

}  // namespace lpn
