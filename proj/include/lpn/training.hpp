#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "lpn/icnn.hpp"
#include "lpn/losses.hpp"

namespace lpn {

/// Thrown when a training iteration produces a non-finite loss or gradient.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, long iteration, double gamma, double lr)
      : std::runtime_error(what), iteration(iteration), gamma(gamma), lr(lr) {}
  long iteration;
  double gamma;
  double lr;
};

/// Piecewise-constant annealing plan for the proximal-matching width.
struct GammaSchedule {
  struct Stage {
    long iterations = 1;
    double gamma = 1.0;
    double learning_rate = 1e-3;
  };
  std::vector<Stage> stages;

  /// gamma non-increasing, every stage has >= 1 iteration and positive gamma/lr.
  void validate() const;
  long total_iterations() const;

  /// The seven-stage plan used for the 1-D Laplacian study
  /// (gamma 0.5 -> 0.1, learning rate 1e-3 -> 1e-6, 24k iterations).
  static GammaSchedule laplacian();
};

/// A fixed-learning-rate stretch of the pretraining phase.
struct LrStage {
  long iterations = 0;
  double learning_rate = 1e-3;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  double sigma = 1.0;
  int batch_size = 2000;
  /// Pretraining stages run before the schedule, with pretrain_loss.
  std::vector<LrStage> pretrain{{10000, 1e-3}, {10000, 1e-4}};
  LossType pretrain_loss = LossType::l1;
  GammaSchedule schedule = GammaSchedule::laplacian();
  std::uint64_t seed = 0;
  PmForm loss_form = PmForm::unnormalized;
  InitScheme init = InitScheme::gaussian;
  AdamHyper adam{};

  void validate() const;
  long pretrain_iterations() const;
};

struct LaplacianSource {
  double mu = 0.0;
  double scale = 1.0;  // b in (1/2b) exp(-|x - mu| / b)
};

/// Mixture of isotropic Gaussians.
struct GaussianMixtureSource {
  std::vector<Eigen::VectorXd> means;
  std::vector<double> stddevs;
  std::vector<double> weights;  // normalized on use
};

/// Samples drawn uniformly (with replacement) from the columns of a matrix
/// loaded from a CSV file, one sample per row.
struct FileDatasetSource {
  std::string path;
  Eigen::MatrixXd samples;  // dim x count
};

struct DataSource {
  std::variant<LaplacianSource, GaussianMixtureSource, FileDatasetSource> kind;
  int dim = 1;

  static DataSource laplacian(double mu, double scale, int dim = 1);
  static DataSource gaussian_mixture(std::vector<Eigen::VectorXd> means, std::vector<double> stddevs,
                                     std::vector<double> weights);
  static DataSource from_file(const std::string& path);

  void validate() const;
};

/// count i.i.d. samples as columns.
Eigen::MatrixXd sample(const DataSource& source, Eigen::Index count, std::mt19937_64& rng);

/// x ~ source, y = x + sigma * N(0, I); deterministic given the rng state.
Batch make_batch(const DataSource& source, double sigma, int batch_size, std::mt19937_64& rng);

struct AdamState {
  ParamGrad first_moment;
  ParamGrad second_moment;
  long step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState fresh(const IcnnArch& arch, const AdamHyper& hyper = {});
};

struct AdamResult {
  AdamState state;
  IcnnParams params;
};

/// Bias-corrected Adam update followed by clip_nonneg.
AdamResult adam_step(AdamState state, IcnnParams params, const ParamGrad& grad, double lr);

struct TrainLogRow {
  long iteration = 0;
  std::string stage;  // "l1:0", "l2:1", "pm:3", ...
  double gamma = 0.0;  // 0 outside proximal-matching stages
  double lr = 0.0;
  double loss = 0.0;

  bool operator==(const TrainLogRow&) const = default;
};

struct TrainResult {
  IcnnParams params;
  IcnnParams pretrained;  // snapshot at the end of pretraining
  std::vector<TrainLogRow> log;
};

/// Runs the pretraining stages with config.pretrain_loss, then every schedule
/// stage with the proximal-matching loss at that stage's (gamma, lr). The
/// optimizer state is reset when switching from pretraining to proximal
/// matching. Deterministic given config.seed. Starts from `initial` when given,
/// otherwise from init_params(arch, config.seed, config.init).
TrainResult train(const IcnnArch& arch, const TrainConfig& config, const DataSource& source,
                  const std::optional<IcnnParams>& initial = std::nullopt);

}  // namespace lpn
