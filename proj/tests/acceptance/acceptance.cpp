// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "bipc/experiment.hpp"
#include "bipc/gradcheck.hpp"
#include "json.hpp"
#include "../support.hpp"

using namespace bipc;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Tolerances and pinned fixtures.
constexpr double kFdTol = 1e-4;
constexpr double kFdSeconds = 10.0;
constexpr double kCpaTol = 1e-10;
constexpr double kCpaSeconds = 5.0;
constexpr double kJsTol = 1e-10;
constexpr double kFullGain = 0.10;
constexpr double kSingleGain = 0.03;
constexpr double kEndToEndSeconds = 120.0;
constexpr int kPdaThreshold = 20;
constexpr int kPdaTargetClasses = 2;  // ceil(c1 / 2) with c1 = 4
constexpr double kScheduleTol = 1e-6;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* title, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%s [%2d] %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs);
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// d(p, q) written out independently of the library.
double pair_d(std::span<const double> p, std::span<const double> q) {
  double acc = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    const double s = p[c] + q[c];
    acc += s * std::log(std::max(s, kEps));
  }
  return -0.5 * acc;
}

double plain_entropy_term(std::span<const double> p) {
  double acc = 0.0;
  for (double v : p) acc += v * std::log(std::max(v, kEps));
  return acc;
}

Matrix one_hot_rows(const std::vector<int>& y, std::size_t classes) {
  Matrix m(y.size(), classes);
  for (std::size_t i = 0; i < y.size(); ++i) m(i, static_cast<std::size_t>(y[i])) = 1.0;
  return m;
}

// Class-wise form: sum over classes of the mean pair distance between the
// class's source rows and the target rows pseudo-labelled with it.
double cpa_classwise(const Matrix& ps, const std::vector<int>& ys, const Matrix& pt,
                     const std::vector<int>& yt, int classes) {
  double total = 0.0;
  for (int c = 0; c < classes; ++c) {
    double acc = 0.0;
    std::size_t ns = 0, nt = 0;
    for (std::size_t j = 0; j < yt.size(); ++j) nt += yt[j] == c;
    for (std::size_t i = 0; i < ys.size(); ++i) {
      if (ys[i] != c) continue;
      ++ns;
      for (std::size_t j = 0; j < yt.size(); ++j)
        if (yt[j] == c) acc += pair_d(ps.row(i), pt.row(j));
    }
    if (ns > 0 && nt > 0) total += acc / static_cast<double>(ns * nt);
  }
  return total;
}

double coefficient_form(const Matrix& ps, const std::vector<int>& ys, const Matrix& pt,
                        const Matrix& p_h_t, int classes) {
  const auto w = loss::calibration_weights(loss::one_hot(ys, classes), p_h_t);
  Tape tape;
  return loss::cpa_alignment(tape.constant(ps), tape.constant(pt), w.alpha_st).value().item();
}

double run_acc(const cli::Prepared& prep, const cli::ExperimentConfig& cfg) {
  return train::train(prep.pretrained, prep.pair.source, prep.pair.target, prep.pair.target_labels,
                      cli::effective_schedule(cfg), cli::effective_train(cfg))
      .report.final_target_acc;
}

json summary_without_identity(const fs::path& dir) {
  json j = json::parse(slurp(dir / "summary.json"));
  for (const char* k : {"name", "mode", "config_hash"}) j.erase(k);
  return j;
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "bipc_acceptance";
  fs::remove_all(work);

  criterion(1, "gradient oracle", [] {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(101);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const std::size_t n = 1 + rng.below(8), m = 1 + rng.below(8);
      const std::size_t c1 = 2 + rng.below(3), c2 = c1 + rng.below(9 - c1);
      const auto ys = testing::random_labels(n, static_cast<int>(c1), rng);
      const auto proto = model::Prototype::from_unnormalized(testing::random_probs(c1, c2, rng));
      const Matrix alpha =
          loss::calibration_weights(loss::one_hot(ys, static_cast<int>(c1)), testing::random_probs(m, c1, rng))
              .alpha_st;
      const Matrix p_g_t = testing::random_probs(m, c2, rng);
      const Matrix logits = testing::random_matrix(m, c1, rng);
      Tape probe;
      const auto cgi_state = loss::cgi_loss(row_softmax(probe.constant(logits)), p_g_t, proto).state;
      worst = std::max(worst, finite_difference_check(
          [&](Tape&, std::span<const Var> v) { return loss::classification_loss(row_softmax(v[0]), ys, 0.1); },
          {testing::random_matrix(n, c1, rng)}));
      worst = std::max(worst, finite_difference_check(
          [&](Tape&, std::span<const Var> v) {
            return loss::cpa_loss(row_softmax(v[0]), row_softmax(v[1]), alpha, ys, proto);
          },
          {testing::random_matrix(n, c2, rng), testing::random_matrix(m, c2, rng)}));
      worst = std::max(worst, finite_difference_check(
          [&](Tape&, std::span<const Var> v) {
            return loss::calibrated_penalty(row_softmax(v[0]), cgi_state.p_tilde, cgi_state.beta,
                                            loss::PenaltyVariant::cgi);
          },
          {logits}));
    }
    const double secs = seconds_since(start);
    return Outcome{worst < kFdTol && secs < kFdSeconds,
                   fmt("max relative error %.3g (limit %.0e), %.2f s (limit %.0f s)", worst, kFdTol, secs, kFdSeconds)};
  });

  criterion(2, "CPA coefficient form equals class-wise form", [] {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(202);
    double worst = 0.0, worst_means = 0.0;
    for (int t = 0; t < 50; ++t) {
      const int classes = 2 + static_cast<int>(rng.below(3));
      const std::size_t n = 2 + rng.below(8), m = 2 + rng.below(8), c2 = 3 + rng.below(6);
      const auto ys = testing::random_labels(n, classes, rng);
      const auto yt = testing::random_labels(m, classes, rng);
      const Matrix ps = testing::random_probs(n, c2, rng), pt = testing::random_probs(m, c2, rng);
      const Matrix p_h_t = one_hot_rows(yt, static_cast<std::size_t>(classes));
      worst = std::max(worst, std::abs(coefficient_form(ps, ys, pt, p_h_t, classes) -
                                       cpa_classwise(ps, ys, pt, yt, classes)));

      // Identical rows within each class: the class-wise mean equals d of the class means.
      const Matrix cs = testing::random_probs(static_cast<std::size_t>(classes), c2, rng);
      const Matrix ct = testing::random_probs(static_cast<std::size_t>(classes), c2, rng);
      Matrix qs(n, c2), qt(m, c2);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < c2; ++c) qs(i, c) = cs(static_cast<std::size_t>(ys[i]), c);
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t c = 0; c < c2; ++c) qt(j, c) = ct(static_cast<std::size_t>(yt[j]), c);
      double means = 0.0;
      for (int c = 0; c < classes; ++c) {
        const bool in_s = std::find(ys.begin(), ys.end(), c) != ys.end();
        const bool in_t = std::find(yt.begin(), yt.end(), c) != yt.end();
        if (in_s && in_t) means += pair_d(cs.row(static_cast<std::size_t>(c)), ct.row(static_cast<std::size_t>(c)));
      }
      worst_means = std::max(worst_means, std::abs(coefficient_form(qs, ys, qt, p_h_t, classes) - means));
    }
    const double secs = seconds_since(start);
    return Outcome{worst <= kCpaTol && worst_means <= kCpaTol && secs < kCpaSeconds,
                   fmt("max |diff| %.3g, class-mean regime %.3g (limit %.0e), %.2f s", worst, worst_means,
                       kCpaTol, secs)};
  });

  criterion(3, "JS identity", [] {
    Rng rng(303);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      const std::size_t c = 2 + rng.below(7);
      Matrix pq = testing::random_probs(2, c, rng, 3.0);
      for (double& v : pq.values()) v = std::max(v, kEps);
      const double rhs = 0.5 * plain_entropy_term(pq.row(0)) + 0.5 * plain_entropy_term(pq.row(1)) +
                         pair_d(pq.row(0), pq.row(1)) + std::log(2.0);
      worst = std::max(worst, std::abs(loss::js_divergence(pq.row(0), pq.row(1)) - rhs));
    }
    return Outcome{worst <= kJsTol, fmt("max |diff| %.3g over 100 pairs (limit %.0e)", worst, kJsTol)};
  });

  criterion(4, "CGI with beta = 1 is Gini impurity", [] {
    Rng rng(404);
    int exact = 0;
    for (int t = 0; t < 50; ++t) {
      const std::size_t n = 1 + rng.below(8), c = 2 + rng.below(3);
      const Matrix p = testing::random_probs(n, c, rng), pt = testing::random_probs(n, c, rng);
      Tape tape;
      const double cgi = loss::calibrated_penalty(tape.constant(p), pt, std::vector<double>(n, 1.0),
                                                  loss::PenaltyVariant::cgi)
                             .value()
                             .item();
      exact += cgi == loss::gini_impurity(p);
    }
    return Outcome{exact == 50, fmt("%g of 50 batches bit-identical", exact)};
  });

  criterion(5, "beta bounds", [] {
    Rng rng(505);
    int inside = 0, ones = 0;
    for (int t = 0; t < 1000; ++t) {
      const std::size_t c = 2 + rng.below(7);
      const Matrix pq = testing::random_probs(2, c, rng, 1.0 + 4.0 * rng.uniform());
      const double b = loss::beta_factor(pq.row(0), pq.row(1));
      inside += b > 0.0 && b <= 1.0;
      ones += loss::beta_factor(pq.row(0), pq.row(0)) == 1.0;
    }
    return Outcome{inside == 1000 && ones == 1000,
                   fmt("%g of 1000 in (0, 1], %g of 1000 equal pairs give exactly 1", inside, ones)};
  });

  criterion(6, "gradient routing", [] {
    Rng rng(606);
    model::Architecture arch;
    const auto params = model::init_params(arch, rng);
    const auto proto = model::Prototype::from_unnormalized(testing::random_probs(4, 8, rng));
    train::StepBatch batch{testing::random_matrix(8, 8, rng), testing::random_labels(8, 4, rng),
                           testing::random_matrix(8, 8, rng)};
    auto zero = [](const std::vector<Matrix>& ms) {
      for (const auto& m : ms)
        for (double v : m.values())
          if (v != 0.0) return false;
      return true;
    };
    const auto r = train::inspect_gradients(params, batch, proto, train::TrainConfig{});
    train::TrainConfig joint;
    joint.cgi_updates_backbone = true;
    const auto j = train::inspect_gradients(params, batch, proto, joint);
    const bool a = zero(r.cgi.theta_g), b = zero(r.cgi.theta), c = zero(r.cpa.theta_h), d = !zero(j.cgi.theta);
    std::string detail = std::string("dLcgi/dtheta_g=0 ") + (a ? "yes" : "no") + ", dLcgi/dtheta=0 " +
                         (b ? "yes" : "no") + ", dLcpa/dtheta_h=0 " + (c ? "yes" : "no") +
                         ", joint dLcgi/dtheta!=0 " + (d ? "yes" : "no");
    return Outcome{a && b && c && d, detail};
  });

  criterion(7, "end-to-end adaptation gain", [] {
    const auto start = std::chrono::steady_clock::now();
    const cli::ExperimentConfig base;
    const cli::Prepared prep = cli::prepare(base);
    double baseline = 0, cpa = 0, cgi = 0, full = 0;
    for (const auto& [name, cfg] : cli::grid_points(base, cli::Axis::components)) {
      if (name == "cls") baseline = run_acc(prep, cfg);
      if (name == "cls_cpa") cpa = run_acc(prep, cfg);
      if (name == "cls_cgi_theta_h") cgi = run_acc(prep, cfg);
      if (name == "cls_cpa_cgi_theta_h") full = run_acc(prep, cfg);
    }
    const double secs = seconds_since(start);
    const bool ok = full - baseline >= kFullGain && cpa - baseline >= kSingleGain &&
                    cgi - baseline >= kSingleGain && secs < kEndToEndSeconds;
    return Outcome{ok, fmt("baseline %.4f, CPA-only %.4f, CGI-only %.4f, full %.4f", baseline, cpa, cgi, full) +
                           fmt(" (gains need >= %.2f / %.2f), %.1f s", kFullGain, kSingleGain, secs)};
  });

  criterion(8, "PDA consistency", [&] {
    cli::ExperimentConfig uda;
    uda.output_dir = (work / "pda_uda").string();
    cli::ExperimentConfig pda0 = uda;
    pda0.mode = cli::Mode::pda;
    pda0.pda_threshold = 0;
    pda0.output_dir = (work / "pda_t0").string();
    cli::run_experiment(uda);
    cli::run_experiment(pda0);
    const bool same_csv = slurp(work / "pda_uda" / "epochs.csv") == slurp(work / "pda_t0" / "epochs.csv");
    const bool same_summary = summary_without_identity(work / "pda_uda") == summary_without_identity(work / "pda_t0");
    const bool same_params = slurp(work / "pda_uda" / "params.ckpt") == slurp(work / "pda_t0" / "params.ckpt");

    cli::ExperimentConfig partial;
    partial.generator.target_classes = kPdaTargetClasses;
    const cli::Prepared prep = cli::prepare(partial);
    const double uda_acc = run_acc(prep, partial);
    partial.mode = cli::Mode::pda;
    partial.pda_threshold = kPdaThreshold;
    const double pda_acc = run_acc(prep, partial);
    const bool ok = same_csv && same_summary && same_params && pda_acc >= uda_acc;
    return Outcome{ok, std::string("T=0 identical to uda: ") + (same_csv && same_summary && same_params ? "yes" : "no") +
                           fmt("; partial target (%g classes, T=%g): pda %.4f vs uda %.4f", kPdaTargetClasses,
                               kPdaThreshold, pda_acc, uda_acc)};
  });

  criterion(9, "feature vs probability domain gap", [&] {
    cli::ExperimentConfig cfg;
    cfg.mode = cli::Mode::fig1;
    cfg.output_dir = (work / "fig1").string();
    cli::run_experiment(cfg);
    const json d = json::parse(slurp(work / "fig1" / "distances.json"));
    const double f = d.at("feature_distance"), p = d.at("probability_distance");
    const bool flagged = d.at("probability_smaller").get<bool>() == (p < f);
    return Outcome{flagged && p < f, fmt("feature %.4f, probability %.4f, seed 1", f, p) +
                                         std::string(", flag ") + (flagged ? "consistent" : "inconsistent")};
  });

  criterion(10, "determinism", [&] {
    std::string detail;
    bool ok = true;
    for (cli::Mode mode : {cli::Mode::uda, cli::Mode::pda, cli::Mode::baseline, cli::Mode::fig1}) {
      bool same = true;
      std::string first_csv, first_summary;
      for (int k = 0; k < 2; ++k) {
        cli::ExperimentConfig cfg;
        cfg.mode = mode;
        cfg.output_dir = (work / "det" / (std::string(cli::mode_name(mode)) + std::to_string(k))).string();
        const auto rec = cli::run_experiment(cfg);
        const std::string csv = slurp(rec[0].directory / "epochs.csv");
        const std::string summary = slurp(rec[0].directory / "summary.json");
        if (k == 0) {
          first_csv = csv;
          first_summary = summary;
        } else {
          same = csv == first_csv && summary == first_summary;
        }
      }
      ok = ok && same;
      detail += std::string(detail.empty() ? "" : ", ") + cli::mode_name(mode) + (same ? " identical" : " DIFFERS");
    }
    return Outcome{ok, detail};
  });

  criterion(11, "schedule values", [] {
    // Worked examples as printed (rounded to the digits shown) and the exact
    // formula values they round from.
    struct Example {
      double got, exact, printed, printed_half_ulp;
    };
    auto lambda = [](double a, double rho) { return a * (2.0 / (1.0 + std::exp(-10.0 * rho)) - 1.0); };
    const Example ex[] = {
        {train::lr_schedule(3e-4, 3e-4, 0.75, 1000.0), 3e-4 / std::pow(1.3, 0.75), 2.464e-4, 0.5e-7},
        {train::lambda_schedule(1.0, 10.0, 1.0), lambda(1.0, 1.0), 0.99991, 0.5e-5},
        {train::lambda_schedule(1.0, 10.0, 0.5), lambda(1.0, 0.5), 0.98661, 0.5e-5},
        {train::lambda_schedule(0.25, 10.0, 1.0), lambda(0.25, 1.0), 0.25 * 0.99991, 0.25 * 0.5e-5},
        {train::lr_schedule(3e-4, 3e-4, 0.75, 0.0), 3e-4, 3e-4, 0.0},
        {train::lambda_schedule(1.0, 10.0, 0.0), 0.0, 0.0, 0.0},
    };
    double worst_exact = 0.0;
    bool printed_ok = true;
    for (const auto& e : ex) {
      worst_exact = std::max(worst_exact, std::abs(e.got - e.exact));
      printed_ok = printed_ok && std::abs(e.got - e.printed) <= e.printed_half_ulp + 1e-15;
    }
    const bool ok = worst_exact < kScheduleTol && printed_ok;
    return Outcome{ok, fmt("lr(1000) %.7g, lambda(1) %.7g, lambda(0.5) %.7g, lambda3(1) %.7g", ex[0].got,
                           ex[1].got, ex[2].got, ex[3].got) +
                           fmt("; max |formula diff| %.2g (limit %.0e), printed digits ", worst_exact, kScheduleTol) +
                           (printed_ok ? "match" : "DIFFER")};
  });

  fs::remove_all(work);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
