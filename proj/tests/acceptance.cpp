// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Seeded protocols are fixed up front;
// see README for the exact settings.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "grad_fixture.hpp"
#include "oracles.hpp"
#include "unisae/interpret.hpp"
#include "unisae/metrics.hpp"
#include "unisae/synthetic.hpp"
#include "unisae/trainer.hpp"
#include "unisae/transport.hpp"

using namespace unisae;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(bool pass, const std::string& name, const std::string& detail) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double max_factorization_err(const Matrix& cost, const TransportPlan& tp) {
  double worst = 0.0;
  for (std::size_t i = 0; i < cost.rows(); ++i)
    for (std::size_t j = 0; j < cost.cols(); ++j)
      worst = std::max(worst, std::abs(tp.plan(i, j) - std::exp(tp.log_u[i] - cost(i, j) / tp.epsilon + tp.log_v[j])));
  return worst;
}

double max_marginal_err(const Matrix& plan, const Vector& r, const Vector& c) {
  double worst = 0.0;
  for (std::size_t i = 0; i < plan.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < plan.cols(); ++j) s += plan(i, j);
    worst = std::max(worst, std::abs(s - r[i]));
  }
  for (std::size_t j = 0; j < plan.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < plan.rows(); ++i) s += plan(i, j);
    worst = std::max(worst, std::abs(s - c[j]));
  }
  return worst;
}

// Every converged OT run of the suite, kept for the factorization and
// convergence-rate criteria.
struct OtRun {
  Matrix cost;
  Vector r, c;
  TransportPlan plan;
};
std::vector<OtRun> ot_runs;

void sinkhorn_feasibility() {
  std::mt19937_64 rng(2024);
  const Vector r(64, 1.0 / 64), c(48, 1.0 / 48);
  SinkhornOptions opt;
  opt.epsilon = 0.1;
  opt.tol = 1e-6;
  opt.max_iters = 500;
  opt.record_history = true;
  std::vector<double> ms;
  int converged = 0, max_iters = 0;
  for (int k = 0; k < 100; ++k) {
    const Matrix cost = oracle::random_matrix(64, 48, rng, 0.0, 2.0);
    const auto t0 = Clock::now();
    TransportPlan tp = sinkhorn(cost, r, c, opt);
    ms.push_back(1e3 * seconds_since(t0));
    converged += tp.converged;
    max_iters = std::max(max_iters, tp.iterations);
    ot_runs.push_back({cost, r, c, std::move(tp)});
  }
  std::nth_element(ms.begin(), ms.begin() + 50, ms.end());
  const double median = ms[50];
  report(converged == 100 && median < 50.0, "sinkhorn_feasibility",
         fmt("%d/100 converged (max %d iterations, limit 500), median %.3f ms per plan (limit 50 ms)", converged,
             max_iters, median));
}

void extra_ot_fixtures() {
  // Small instances across regimes, including the log domain and a
  // temperature where tau(K) is well below 1.
  std::mt19937_64 rng(77);
  for (const double eps : {1.0, 0.5, 0.1, 0.03}) {
    for (int k = 0; k < 25; ++k) {
      const std::size_t n = 2 + rng() % 7, m = 2 + rng() % 7;
      const Matrix cost = oracle::random_matrix(n, m, rng, 0.0, 2.0);
      const Vector r = oracle::random_simplex(n, rng), c = oracle::random_simplex(m, rng);
      SinkhornOptions opt;
      opt.epsilon = eps;
      opt.tol = 1e-9;
      opt.max_iters = 100000;
      opt.record_history = true;
      TransportPlan tp = sinkhorn(cost, r, c, opt);
      if (tp.converged) ot_runs.push_back({cost, r, c, std::move(tp)});
    }
  }
}

void linear_convergence() {
  std::size_t runs = 0, ratios_checked = 0, informative = 0;
  double worst_excess = -1.0;
  bool ok = true;
  for (const OtRun& run : ot_runs) {
    if (!run.plan.converged) continue;
    SinkhornOptions tight;
    tight.epsilon = run.plan.epsilon;
    tight.tol = 1e-14;
    tight.max_iters = 200000;
    const TransportPlan star = sinkhorn(run.cost, run.r, run.c, tight);
    const double tau = birkhoff_coefficient_from_cost(run.cost, run.plan.epsilon);
    informative += tau < 0.99;
    for (double ratio : contraction_ratios(run.plan.log_v_history, star.log_v)) {
      ++ratios_checked;
      worst_excess = std::max(worst_excess, ratio - (tau * tau + 0.05));
      if (ratio > tau * tau + 0.05) ok = false;
    }
    ++runs;
  }
  report(ok && ratios_checked > 0, "linear_convergence",
         fmt("%zu runs (%zu with tau < 0.99), %zu ratios, max(ratio - (tau^2 + 0.05)) = %.4f", runs, informative,
             ratios_checked, worst_excess));
}

void factorization() {
  double worst_fact = 0.0, worst_marg = 0.0;
  for (const OtRun& run : ot_runs) {
    worst_fact = std::max(worst_fact, max_factorization_err(run.cost, run.plan));
    worst_marg = std::max(worst_marg, max_marginal_err(run.plan.plan, run.r, run.c));
  }
  report(worst_fact <= 1e-12 && worst_marg <= 1e-6, "factorization",
         fmt("%zu plans, max |P - diag(u)Kdiag(v)| = %.2e (limit 1e-12), max marginal error %.2e (limit 1e-6)",
             ot_runs.size(), worst_fact, worst_marg));
}

void small_ot_optimality() {
  std::mt19937_64 rng(3);
  double worst_gap = -1e300, worst_oracle = 0.0;
  for (int k = 0; k < 50; ++k) {
    const Matrix cost = oracle::random_matrix(3, 3, rng, 0.0, 2.0);
    const Vector r = oracle::random_simplex(3, rng), c = oracle::random_simplex(3, rng);
    SinkhornOptions opt;
    opt.epsilon = 0.1;
    opt.tol = 1e-13;
    opt.max_iters = 100000;
    const TransportPlan tp = sinkhorn(cost, r, c, opt);
    const double ours = oracle::entropic_objective(cost, tp.plan, 0.1);
    for (int s = 0; s < 10000; ++s)
      worst_gap = std::max(worst_gap, ours - oracle::entropic_objective(cost, oracle::random_feasible_plan_3x3(r, c, rng), 0.1));
    const Matrix ref = oracle::log_sinkhorn(cost, r, c, 0.1);
    for (std::size_t i = 0; i < 9; ++i) worst_oracle = std::max(worst_oracle, std::abs(ref.flat()[i] - tp.plan.flat()[i]));
  }
  report(worst_gap <= 1e-8 && worst_oracle <= 1e-6, "small_ot_optimality",
         fmt("50 problems x 10000 feasible plans: max(ours - other) = %.2e (limit 1e-8); "
             "max |ours - log-domain oracle| = %.2e (limit 1e-6)",
             worst_gap, worst_oracle));
}

void gradient_suite() {
  const std::vector<ModelConfig> configs{
      {{5, 3, 2, 2, 1}, {4, 3, 2, 2, 1}},
      {{4, 4, 0, 2, 0}, {6, 4, 0, 1, 0}},
      {{8, 6, 6, 3, 2}, {8, 6, 6, 2, 3}},
  };
  const LossWeights w{1.0, 0.5, 0.3};
  std::mt19937_64 rng(5);
  double worst[4] = {0, 0, 0, 0};
  std::size_t checks = 0;
  for (const ModelConfig& cfg : configs)
    for (int trial = 0; trial < 4; ++trial) {
      const std::size_t ta = 1 + rng() % 4, tb = 1 + rng() % 4;
      const oracle::Fixture f = oracle::make_fixture(cfg, ta, tb, rng);
      const SampleForward fwd = forward(f.view, f.params, cfg);
      ModelParams g[4] = {ModelParams::zeros(cfg), ModelParams::zeros(cfg), ModelParams::zeros(cfg),
                          ModelParams::zeros(cfg)};
      self_loss(f.view, fwd, f.params, &g[0]);
      align_loss(f.view, fwd, f.params, &g[1]);
      cross_loss(f.view, fwd, f.plan, f.params, &g[2]);
      total_loss(f.view, fwd, f.plan, f.params, w, &g[3]);
      const std::function<double(const ModelParams&)> losses[4] = {
          [&](const ModelParams& p) {
            const SelfLoss s = self_loss(f.view, forward(f.view, p, cfg), p);
            return s.vision + s.text;
          },
          [&](const ModelParams& p) { return align_loss(f.view, forward(f.view, p, cfg), p); },
          [&](const ModelParams& p) { return cross_loss(f.view, forward(f.view, p, cfg), f.plan, p); },
          [&](const ModelParams& p) { return total_loss(f.view, forward(f.view, p, cfg), f.plan, p, w).total; },
      };
      for (int k = 0; k < 4; ++k) {
        const oracle::GradCheck res = oracle::check_gradient(f.params, g[k], losses[k]);
        worst[k] = std::max(worst[k], res.max_rel);
        checks += res.checked;
      }
    }
  const double overall = *std::max_element(worst, worst + 4);
  report(overall <= 1e-4, "gradient_suite",
         fmt("%zu partials; max rel err self %.2e, align %.2e, cross %.2e, total %.2e (limit 1e-4)", checks, worst[0],
             worst[1], worst[2], worst[3]));
}

void metrics_oracle() {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  int point_mismatch = 0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t gh = 1 + rng() % 8, gw = 1 + rng() % 8, tb = 1 + rng() % 6;
    Matrix plan = oracle::random_matrix(gh * gw, tb, rng, 0.0, 1.0);
    if (trial % 5 == 0)
      for (std::size_t j = 0; j < tb; ++j) plan(plan.rows() - 1, j) = plan(0, j);
    const Heatmap hm = heatmap_from_plan(plan, gh, gw);
    const std::vector<double> ref = oracle::heatmap(plan);
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(ref[i] - hm.grid.flat()[i]));
    std::vector<Box> boxes(1 + rng() % 3);
    for (Box& b : boxes) {
      const double a = u(rng), c = u(rng), e = u(rng), f = u(rng);
      b = {std::min(a, c), std::min(e, f), std::max(a, c), std::max(e, f)};
    }
    const GroundingScores s = grounding_scores(hm, boxes);
    const oracle::Scores o =
        oracle::grounding(std::vector<double>(hm.grid.flat().begin(), hm.grid.flat().end()), gh, gw, boxes);
    worst = std::max({worst, std::abs(s.mass_at_obj - o.mass), std::abs(s.iou_at_10 - o.iou)});
    point_mismatch += s.point_at_1 != o.point;
    const Matrix codes = oracle::random_matrix(1 + rng() % 30, 1 + rng() % 10, rng);
    worst = std::max(worst, std::abs(clustering_maxfreq(codes) - oracle::maxfreq(codes)));
    const Matrix h = oracle::random_matrix(2 + rng() % 20, 1 + rng() % 8, rng);
    Matrix hh = h;
    for (double& x : hh.flat()) x += 0.5 * (u(rng) - 0.5);
    worst = std::max(worst, std::abs(r_squared(h, hh) - oracle::r_squared(h, hh)));
  }
  Heatmap hand{{2, 2}, Matrix(2, 2)};
  hand.grid(0, 0) = 0.4;
  hand.grid(0, 1) = 0.1;
  hand.grid(1, 0) = 0.3;
  hand.grid(1, 1) = 0.2;
  const GroundingScores ex = grounding_scores(hand, {Box{0.0, 0.0, 0.5, 1.0}});
  const bool hand_ok = ex.mass_at_obj == 0.7 && ex.point_at_1 == 1.0 && ex.iou_at_10 == 0.5;
  report(worst <= 1e-12 && point_mismatch == 0 && hand_ok, "metrics_oracle",
         fmt("100 fixtures: max abs diff %.2e (limit 1e-12), point@1 mismatches %d; 2x2 example -> (%.17g, %.17g, %.17g)",
             worst, point_mismatch, ex.mass_at_obj, ex.point_at_1, ex.iou_at_10));
}

TrainConfig desk_config(std::size_t d, std::size_t ks, std::size_t kp, std::size_t k_s, std::size_t k_p,
                        double lr, std::size_t steps, std::uint64_t seed) {
  TrainConfig tc;
  tc.model.vision = {d, ks, kp, k_s, k_p};
  tc.model.text = tc.model.vision;
  tc.batch_size = 32;
  tc.steps = steps;
  tc.lr = lr;
  tc.seed = seed;
  return tc;
}

void table1_direction() {
  const auto t0 = Clock::now();
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SyntheticConfig sc;
    sc.seed = seed;
    const auto data = generate_synthetic(sc).first;
    const TrainConfig a = desk_config(sc.d, 16, 8, 1, 1, 3e-3, 1000, seed);
    const TrainConfig b = desk_config(sc.d, 24, 0, 2, 0, 3e-3, 1000, seed);
    const R2Report ra = r2_report(a.model, train(a, data).params, data, a.guidance, a.sinkhorn_options());
    const R2Report rb = r2_report(b.model, train(b, data).params, data, b.guidance, b.sinkhorn_options());
    const bool win = ra.vision.joint > rb.vision.joint && ra.t_to_v.shared > rb.t_to_v.shared;
    wins += win;
    detail += fmt(" s%d[selfV %.3f vs %.3f, crossTV %.3f vs %.3f]", static_cast<int>(seed), ra.vision.joint,
                  rb.vision.joint, ra.t_to_v.shared, rb.t_to_v.shared);
  }
  const double secs = seconds_since(t0);
  report(wins >= 4 && secs < 600.0, "table1_direction",
         fmt("shared+private beats shared-only on both in %d/5 seeds (need 4), %.1f s (limit 600 s);", wins, secs) +
             detail);
}

double recovered_fraction(const Matrix& truth, const Matrix& dec) {
  std::size_t hit = 0;
  for (std::size_t a = 0; a < truth.cols(); ++a) {
    double best = 0.0;
    for (std::size_t c = 0; c < dec.cols(); ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < truth.rows(); ++r) s += truth(r, a) * dec(r, c);
      best = std::max(best, std::abs(s));
    }
    hit += best >= 0.9;
  }
  return static_cast<double>(hit) / static_cast<double>(truth.cols());
}

void dictionary_recovery() {
  int wins = 0;
  double slowest = 0.0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SyntheticConfig sc;
    sc.seed = seed;
    auto [data, truth] = generate_synthetic(sc);
    const TrainConfig tc = desk_config(sc.d, 16, 8, 1, 1, 1e-3, 5000, seed);
    const auto t0 = Clock::now();
    const Checkpoint ck = train(tc, data);
    slowest = std::max(slowest, seconds_since(t0));
    const double v = recovered_fraction(truth.shared_dictionary, ck.params.vision.dec_shared);
    const double t = recovered_fraction(truth.shared_dictionary, ck.params.text.dec_shared);
    wins += v >= 0.8 && t >= 0.8;
    detail += fmt(" s%d[v %.3f t %.3f]", static_cast<int>(seed), v, t);
  }
  report(wins >= 4 && slowest < 300.0, "dictionary_recovery",
         fmt(">= 80%% of atoms at |cos| >= 0.9 in both modalities in %d/5 seeds (need 4), slowest run %.1f s "
             "(limit 300 s);",
             wins, slowest) +
             detail);
}

void table3_direction() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SyntheticConfig sc;
    sc.seed = seed;
    const auto data = generate_synthetic(sc).first;
    TrainConfig unguided = desk_config(sc.d, 16, 8, 1, 1, 3e-3, 1000, seed);
    unguided.guidance.mode = GuidanceMode::kNone;
    unguided.weights.beta_align = 0.0;
    const TrainConfig guided = desk_config(sc.d, 16, 8, 1, 1, 3e-3, 1000, seed);
    const GridShape grid{sc.grid_h, sc.grid_w};
    const EvalReport u = evaluate(train(unguided, data), data, grid);
    const EvalReport g = evaluate(train(guided, data), data, grid);
    const bool win = g.maxfreq_t2i <= u.maxfreq_t2i && g.maxfreq_i2t <= u.maxfreq_i2t &&
                     g.grounding.mean.point_at_1 >= u.grounding.mean.point_at_1;
    wins += win;
    detail += fmt(" s%d[t2i %.3f vs %.3f, i2t %.3f vs %.3f, point %.3f vs %.3f]", static_cast<int>(seed),
                  g.maxfreq_t2i, u.maxfreq_t2i, g.maxfreq_i2t, u.maxfreq_i2t, g.grounding.mean.point_at_1,
                  u.grounding.mean.point_at_1);
  }
  report(wins >= 4, "table3_direction",
         fmt("guided maxfreq <= unguided (both directions) without losing point@1 in %d/5 seeds (need 4);", wins) +
             detail);
}

void interpretation_purity() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SyntheticConfig sc;
    sc.seed = seed;
    sc.orthogonal = true;
    auto [data, truth] = generate_synthetic(sc);
    const ConceptLibrary lib = make_concept_library(sc, truth);
    const TrainConfig tc = desk_config(sc.d, 16, 8, 1, 1, 1e-3, 5000, seed);
    const InterpretResult res = interpret(train(tc, data), data, lib, ClusterConfig{});
    // family -> neurons whose report lists any of its terms
    std::map<std::string, std::set<std::size_t>> where;
    bool reports_ok = true;
    for (const NeuronReport& r : res.reports) {
      if (!r.interpretable || r.purity != 1.0) reports_ok = false;
      for (const ConceptSummary& c : r.concepts) where[c.term.substr(0, c.term.find('_'))].insert(r.neuron);
    }
    std::set<std::size_t> used;
    std::size_t placed = 0;
    bool distinct = true;
    for (const auto& [family, neurons] : where) {
      if (neurons.size() != 1) distinct = false;
      for (std::size_t n : neurons) distinct = used.insert(n).second && distinct;
      placed += neurons.size() == 1;
    }
    const bool win = reports_ok && distinct && placed == sc.n_shared;
    wins += win;
    detail += fmt(" s%d[%zu/%zu families on distinct neurons, %zu reports%s]", static_cast<int>(seed), placed,
                  sc.n_shared, res.reports.size(), reports_ok ? ", all pure+interpretable" : ", impure report");
  }
  report(wins >= 4, "interpretation_purity",
         fmt("every family on its own interpretable purity-1.0 neuron in %d/5 seeds (need 4);", wins) + detail);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

bool run_pipeline(const std::filesystem::path& dir, const std::string& threads) {
  namespace fs = std::filesystem;
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "synth.cfg") << "n_samples = 80\nseed = 9\n";
  std::ofstream(dir / "train.cfg") << "d = 32\nn_shared = 16\nn_private = 8\nk_shared = 1\nk_private = 1\n"
                                      "batch_size = 32\nsteps = 200\nlr = 0.003\nseed = 9\n";
  std::ostringstream out, err;
  const std::string d = dir.string();
  const std::vector<std::vector<std::string>> steps{
      {"--threads", threads, "gen-synth", "--config", d + "/synth.cfg", "--out", d + "/data"},
      {"--threads", threads, "train", "--config", d + "/train.cfg", "--data", d + "/data", "--out", d + "/model.lckp",
       "--history", d + "/history.csv"},
      {"--threads", threads, "eval", "--ckpt", d + "/model.lckp", "--data", d + "/data", "--out", d + "/eval"},
      {"--threads", threads, "interpret", "--ckpt", d + "/model.lckp", "--data", d + "/data", "--concepts",
       d + "/data/concepts.json", "--out", d + "/reports.json"},
  };
  for (const auto& args : steps)
    if (cli::run(args, out, err) != 0) return false;
  return true;
}

void determinism() {
  namespace fs = std::filesystem;
  const fs::path base = fs::temp_directory_path() / "unisae_acceptance_det";
  const fs::path runs[3] = {base / "a", base / "b", base / "c"};
  const std::string threads[3] = {"1", "1", "3"};
  bool ok = true;
  for (int k = 0; k < 3; ++k) ok = run_pipeline(runs[k], threads[k]) && ok;
  std::size_t files = 0, differing = 0;
  if (ok) {
    for (const auto& entry : fs::recursive_directory_iterator(runs[0])) {
      if (!entry.is_regular_file()) continue;
      const fs::path rel = fs::relative(entry.path(), runs[0]);
      ++files;
      const std::string a = slurp(entry.path());
      if (a != slurp(runs[1] / rel) || a != slurp(runs[2] / rel)) ++differing;
    }
  }
  report(ok && files > 0 && differing == 0, "determinism",
         fmt("gen-synth -> train -> eval -> interpret run 3 times (--threads 1, 1, 3): %zu files compared, %zu differ%s",
             files, differing, ok ? "" : " (pipeline step failed)"));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  sinkhorn_feasibility();
  extra_ot_fixtures();
  linear_convergence();
  factorization();
  small_ot_optimality();
  gradient_suite();
  metrics_oracle();
  table1_direction();
  dictionary_recovery();
  table3_direction();
  interpretation_purity();
  determinism();
  std::printf("%d criteria failed, %.1f s total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
