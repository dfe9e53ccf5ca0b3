// lpn: train learned proximal networks, evaluate their regularizer and run
// PnP reconstructions. Every subcommand writes a summary.json into --out.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "lpn/checkpoint.hpp"
#include "lpn/config.hpp"
#include "lpn/csv.hpp"
#include "lpn/experiments.hpp"

namespace {

using nlohmann::json;

struct Overrides {
  std::string spec_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> checkpoint;
  std::optional<int> batch_size;
  std::optional<double> sigma;
  std::optional<double> alpha;
  std::optional<std::vector<int>> hidden;
  std::optional<long> pretrain_iters;
  std::optional<double> pretrain_lr;
  std::optional<std::string> schedule;
  std::optional<double> rho;
  std::optional<double> eta;
  std::optional<int> max_iters;
  std::optional<std::string> solver;
  std::optional<double> noise;
  std::optional<int> samples;

  void attach(CLI::App* app) {
    app->add_option("--spec", spec_file, "ExperimentSpec JSON file")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "seed threaded through data, init and operators");
    app->add_option("--out", out, "output directory");
    app->add_option("--checkpoint", checkpoint, "use this network instead of training")->check(CLI::ExistingFile);
    app->add_option("--batch-size", batch_size);
    app->add_option("--sigma", sigma, "training noise level");
    app->add_option("--alpha", alpha, "strong-convexity weight");
    app->add_option("--hidden", hidden, "hidden layer widths")->expected(1, -1);
    app->add_option("--pretrain-iters", pretrain_iters);
    app->add_option("--pretrain-lr", pretrain_lr);
    app->add_option("--schedule", schedule, "'laplacian', 'none' or a JSON list [[iters, gamma, lr], ...]");
    app->add_option("--rho", rho, "ADMM penalty (default 1.1 ||A^T A||)");
    app->add_option("--eta", eta, "PGD step (default 0.9 / ||A^T A||)");
    app->add_option("--max-iters", max_iters, "solver iteration cap");
    app->add_option("--solver", solver)->check(CLI::IsMember({"admm", "pgd"}));
    app->add_option("--noise", noise, "measurement noise level");
    app->add_option("--samples", samples, "number of test samples");
  }

  lpn::ExperimentSpec build(lpn::ExperimentName name) const {
    json j;
    if (!spec_file.empty()) {
      std::ifstream in(spec_file);
      j = json::parse(in);
    }
    j["name"] = lpn::experiment_name(name);
    if (seed) j["seed"] = *seed;
    lpn::ExperimentSpec s = lpn::spec_from_json(j);
    if (seed && !(j.contains("train") && j["train"].contains("seed"))) s.train.seed = *seed;
    if (out) s.output_dir = *out;
    if (checkpoint) s.checkpoint = *checkpoint;
    if (batch_size) s.train.batch_size = *batch_size;
    if (sigma) s.train.sigma = *sigma;
    if (alpha) s.arch.alpha = *alpha;
    if (hidden) s.arch.hidden_widths = *hidden;
    if (pretrain_iters) s.train.pretrain = {{*pretrain_iters, pretrain_lr.value_or(1e-3)}};
    if (schedule) {
      if (*schedule == "none")
        s.train.schedule = lpn::GammaSchedule{};
      else if (*schedule == "laplacian")
        s.train.schedule = lpn::GammaSchedule::laplacian();
      else
        s.train = lpn::train_config_from_json(json{{"schedule", json::parse(*schedule)}}, s.train);
    }
    if (rho) s.pnp.rho = *rho;
    if (eta) s.pnp.eta = *eta;
    if (max_iters) s.pnp.max_iters = *max_iters;
    if (solver) s.solver = *solver == "pgd" ? lpn::SolverKind::pgd : lpn::SolverKind::admm;
    if (noise) s.measurement_noise = *noise;
    if (samples) s.num_samples = *samples;
    s.validate();
    return s;
  }
};

int cmd_train(const Overrides& o, const std::string& experiment) {
  auto spec = o.build(lpn::experiment_from_name(experiment));
  spec.checkpoint.reset();
  const lpn::Checkpoint ckpt = lpn::obtain_model(spec);
  lpn::write_json(spec.output_dir / "summary.json",
                  {{"command", "train"}, {"spec", lpn::spec_to_json(spec)},
                   {"checkpoint", (spec.output_dir / "model.ckpt").string()}});
  std::cout << "wrote " << (spec.output_dir / "model.ckpt").string() << '\n';
  return 0;
}

int cmd_eval_prior(const Overrides& o, const std::string& points_file, double lo, double hi, int count) {
  auto spec = o.build(lpn::ExperimentName::laplacian);
  if (!spec.checkpoint) throw std::invalid_argument("eval-prior needs --checkpoint");
  const lpn::Checkpoint ckpt = lpn::load_checkpoint(*spec.checkpoint);
  Eigen::MatrixXd xs;
  if (!points_file.empty()) {
    xs = lpn::read_samples_csv(points_file);
  } else {
    if (ckpt.arch.input_dim != 1) throw std::invalid_argument("eval-prior: grid mode needs a 1-D model; use --points");
    xs = lpn::GridSpec{lo, hi, count}.values().transpose();
  }
  const lpn::PriorCurve curve =
      lpn::eval_prior_curve(ckpt.params, ckpt.arch, xs, spec.inversion_tol, spec.inversion_max_iters);
  lpn::CsvTable t;
  for (Eigen::Index d = 0; d < xs.rows(); ++d) t.header.push_back("x" + std::to_string(d));
  for (const char* h : {"R", "R_raw", "residual", "iterations", "converged"}) t.header.push_back(h);
  for (Eigen::Index i = 0; i < xs.cols(); ++i) {
    std::vector<std::string> row;
    for (Eigen::Index d = 0; d < xs.rows(); ++d) row.push_back(lpn::format_double(xs(d, i)));
    const auto& inv = curve.inversions[static_cast<std::size_t>(i)];
    row.push_back(lpn::format_double(curve.values[static_cast<std::size_t>(i)]));
    row.push_back(lpn::format_double(curve.raw[static_cast<std::size_t>(i)]));
    row.push_back(lpn::format_double(inv.residual));
    row.push_back(std::to_string(inv.iterations));
    row.push_back(inv.converged ? "1" : "0");
    t.add_row(std::move(row));
  }
  lpn::write_csv(spec.output_dir / "prior.csv", t);
  lpn::write_json(spec.output_dir / "summary.json", {{"command", "eval-prior"},
                                                     {"checkpoint", spec.checkpoint->string()},
                                                     {"points", xs.cols()},
                                                     {"offset", curve.offset},
                                                     {"failures", curve.failures()}});
  std::cout << "evaluated R at " << xs.cols() << " points, " << curve.failures() << " inversion failures\n";
  return curve.failures() == 0 ? 0 : 2;
}

int cmd_solve(const Overrides& o, const std::string& problem) {
  auto spec = o.build(lpn::experiment_from_name(problem));
  const lpn::Checkpoint model = lpn::obtain_model(spec);
  const lpn::InverseReport r = lpn::run_inverse_problem(spec, model);
  std::cout << "PSNR " << r.reconstruction.psnr << " dB (measurement " << r.measurement.psnr << " dB), "
            << r.state.iterations << " iterations, converged=" << r.state.converged << '\n';
  if (r.kkt_available) std::cout << "KKT r1=" << r.kkt.r1 << " r2=" << r.kkt.r2 << " r3=" << r.kkt.r3 << '\n';
  for (const auto& w : r.state.warnings) std::cerr << "warning: " << w << '\n';
  return r.state.converged ? 0 : 2;
}

int cmd_demo_laplacian(const Overrides& o) {
  const auto spec = o.build(lpn::ExperimentName::laplacian);
  const lpn::LaplacianReport r = lpn::run_laplacian(spec);
  bool ok = true;
  for (const auto& m : r.models) {
    std::cout << m.name << ": sup|f - soft| = " << m.sup_error_soft << ", mean|f - E[x|y]| = " << m.mean_error_posterior
              << ", sup|R - |x|| = " << m.prior_sup_distance << ", inversion failures = " << m.prior_failures << '\n';
    ok = ok && m.prior_failures == 0;
  }
  return ok ? 0 : 2;
}

int cmd_prior_sweep(const Overrides& o) {
  const auto spec = o.build(lpn::ExperimentName::prior_sweep);
  const lpn::Checkpoint model = lpn::obtain_model(spec);
  const lpn::SweepReport r = lpn::run_prior_sweep(spec, model);
  std::cout << "mean R vs noise:";
  for (double v : r.noise_mean_r) std::cout << ' ' << v;
  std::cout << "\nargmax lambda: " << r.lambdas[r.lambda_argmax] << ", inversion failures: " << r.failures << '\n';
  return r.failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Training churns through same-sized temporaries; returning them to the OS
  // every iteration dominates the runtime otherwise.
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
#endif
  CLI::App app{"Learned proximal networks"};
  app.require_subcommand(1);

  Overrides train_o, prior_o, solve_o, demo_o, sweep_o;
  std::string train_experiment = "laplacian";
  auto* train = app.add_subcommand("train", "train an LPN and write model.ckpt");
  train_o.attach(train);
  train->add_option("--experiment", train_experiment, "default settings to start from")
      ->check(CLI::IsMember({"laplacian", "prior_sweep", "deblur", "compressed_sensing"}));

  std::string points_file;
  double lo = -3.0, hi = 3.0;
  int count = 121;
  auto* eval = app.add_subcommand("eval-prior", "evaluate the learned regularizer R");
  prior_o.attach(eval);
  eval->add_option("--points", points_file, "CSV with one point per row")->check(CLI::ExistingFile);
  eval->add_option("--lo", lo);
  eval->add_option("--hi", hi);
  eval->add_option("--count", count);

  std::string problem = "deblur";
  auto* solve = app.add_subcommand("solve", "run PnP-ADMM or PnP-PGD on a toy inverse problem");
  solve_o.attach(solve);
  solve->add_option("--problem", problem)->check(CLI::IsMember({"deblur", "compressed_sensing"}));

  auto* demo = app.add_subcommand("demo-laplacian", "train l2, l1 and proximal-matching LPNs on Laplace(0, 1)");
  demo_o.attach(demo);

  auto* sweep = app.add_subcommand("prior-sweep", "R under noise and along convex combinations");
  sweep_o.attach(sweep);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_o, train_experiment);
    if (eval->parsed()) return cmd_eval_prior(prior_o, points_file, lo, hi, count);
    if (solve->parsed()) return cmd_solve(solve_o, problem);
    if (demo->parsed()) return cmd_demo_laplacian(demo_o);
    if (sweep->parsed()) return cmd_prior_sweep(sweep_o);
  } catch (const lpn::TrainingError& e) {
    std::cerr << "training failed at iteration " << e.iteration << " (gamma " << e.gamma << ", lr " << e.lr
              << "): " << e.what() << '\n';
    return 3;
  } catch (const lpn::PnpError& e) {
    std::cerr << "solver failed at iteration " << e.iteration << ": " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
