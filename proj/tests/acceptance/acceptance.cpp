// Acceptance run: one PASS/FAIL line per criterion. Arguments select a subset
// of criteria by number; no arguments runs all of them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "scd/diagnostics/diagnostics.hpp"
#include "scd/losses/grad_suite.hpp"
#include "scd/losses/losses.hpp"
#include "scd/numerics/ops.hpp"
#include "scd/pipeline/distill.hpp"
#include "scd/pipeline/evaluate.hpp"
#include "scd/pipeline/teacher.hpp"
#include "scd/refiner/refiner.hpp"
#include "scd/regions/regions.hpp"
#include "scd/rng.hpp"
#include "scd/synthdata/synthdata.hpp"
#include "../unit/test_support.hpp"

namespace fs = std::filesystem;
using namespace scd;
using num::TensorD;

namespace {

// Reduced desk-scale sizes.
constexpr std::size_t kScenes = 1000;  // 800 / 100 / 100 split
constexpr std::size_t kTeacherEpochs = 15;
constexpr std::size_t kRefinerImages = 400;
constexpr std::size_t kRefinerEpochs = 2;
constexpr double kRefinerLr = 1e-3;
constexpr std::size_t kRefinerHeldout = 20;
constexpr std::size_t kCrPairs = 40;
constexpr std::size_t kDistillScenes = 400;
constexpr std::size_t kDistillEpochs = 6;
const std::vector<std::uint64_t> kSeeds{1, 2, 3};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

// Wall time spent per named stage, so criteria can report their own budget.
std::map<std::string, double> g_stage_seconds;

template <typename F>
auto timed(const std::string& stage, F&& f) {
  const auto t0 = Clock::now();
  if constexpr (std::is_void_v<decltype(f())>) {
    f();
    g_stage_seconds[stage] += seconds_since(t0);
  } else {
    auto r = f();
    g_stage_seconds[stage] += seconds_since(t0);
    return r;
  }
}

bool g_any_failed = false;

void report(int id, bool pass, const std::string& detail) {
  g_any_failed = g_any_failed || !pass;
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string list(const std::vector<double>& v, const char* f = "%.3f") {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(f, v[i]);
  return s + "]";
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// --- shared trained artifacts ----------------------------------------------------

struct SeedWorld {
  data::Dataset data;
  data::ClassPrototypes protos;
  std::map<double, vit::Encoder> teachers;  // keyed by eta
  std::map<refiner::Direction, refiner::Refiner> refiners;
};

std::map<std::uint64_t, SeedWorld> g_worlds;

SeedWorld& world(std::uint64_t seed) {
  auto it = g_worlds.find(seed);
  if (it != g_worlds.end()) return it->second;
  SeedWorld w;
  w.data = data::generate(derive_seed(seed, "data"), kScenes);
  w.protos = data::prototypes(derive_seed(seed, "data/prototypes"), data::kNumClasses, vit::EncoderConfig{}.dim);
  return g_worlds.emplace(seed, std::move(w)).first->second;
}

const vit::Encoder& teacher(std::uint64_t seed, double eta) {
  SeedWorld& w = world(seed);
  auto it = w.teachers.find(eta);
  if (it != w.teachers.end()) return it->second;
  vit::Encoder enc(vit::EncoderConfig{}, derive_seed(seed, "encoder/init"));
  pipeline::TeacherConfig tc;
  tc.eta = eta;
  tc.epochs = kTeacherEpochs;
  tc.seed = derive_seed(seed, "teacher");
  const auto res = timed(eta == 0 ? "teacher_eta0" : "teacher_eta05",
                         [&] { return pipeline::pretrain_teacher(enc, w.data, w.protos, tc); });
  std::printf("  [seed %llu] teacher eta=%.1f val accuracy %.3f\n", static_cast<unsigned long long>(seed), eta,
              res.val_accuracy);
  enc.set_frozen(true);
  return w.teachers.emplace(eta, std::move(enc)).first->second;
}

std::vector<Image> images(const std::vector<data::Scene>& scenes, std::size_t n) {
  std::vector<Image> out;
  for (std::size_t i = 0; i < std::min(n, scenes.size()); ++i) out.push_back(scenes[i].image);
  return out;
}

const refiner::Refiner& trained_refiner(std::uint64_t seed, refiner::Direction dir) {
  SeedWorld& w = world(seed);
  auto it = w.refiners.find(dir);
  if (it != w.refiners.end()) return it->second;
  const auto& t = teacher(seed, 0.5);
  refiner::Refiner r(t, refiner::RefinerConfig{}, derive_seed(seed, "refiner/init"));
  refiner::RefinerTrainConfig rc;
  rc.epochs = kRefinerEpochs;
  rc.lr = kRefinerLr;
  rc.direction = dir;
  rc.seed = derive_seed(seed, "refiner/train");
  const bool g2l = dir == refiner::Direction::global_to_local;
  const auto res = timed(g2l ? "refiner_g2l" : "refiner_l2g", [&] {
    return refiner::train_refiner(r, t, images(w.data.train, kRefinerImages), images(w.data.val, kRefinerHeldout), rc);
  });
  std::printf("  [seed %llu] refiner %s held-out loss %.4f -> %.4f\n", static_cast<unsigned long long>(seed),
              g2l ? "G2L" : "L2G", res.heldout_before, res.heldout_after);
  r.set_frozen(true);
  return w.refiners.emplace(dir, std::move(r)).first->second;
}

std::vector<std::pair<Image, Image>> cr_pairs(const std::vector<data::Scene>& test) {
  std::vector<std::pair<Image, Image>> pairs;
  for (std::size_t i = 0; i + 1 < test.size() && pairs.size() < kCrPairs; i += 2) pairs.emplace_back(test[i].image, test[i + 1].image);
  return pairs;
}

double teacher_cr(std::uint64_t seed, double eta) {
  const auto& t = teacher(seed, eta);
  return timed("cr", [&] {
    return diag::coupling_ratio(diag::encoder_pathway(t), cr_pairs(world(seed).data.test), t.config().grid()).cr;
  });
}

double refined_cr(std::uint64_t seed, refiner::Direction dir) {
  const auto& t = teacher(seed, 0.5);
  const auto& r = trained_refiner(seed, dir);
  return timed("cr", [&] {
    return diag::coupling_ratio(diag::refiner_pathway(r, t), cr_pairs(world(seed).data.test), t.config().grid()).cr;
  });
}

// --- criterion 1: gradient fidelity ----------------------------------------------

std::optional<std::vector<loss::GradSuiteEntry>> g_suite;

const std::vector<loss::GradSuiteEntry>& suite() {
  if (!g_suite) g_suite = timed("grad_suite", [] { return loss::run_grad_suite(0, 50); });
  return *g_suite;
}

void criterion1() {
  const auto t0 = Clock::now();
  bool pass = true;
  std::string detail;
  for (const auto& e : suite()) {
    if (e.name == "roi_align") continue;
    pass = pass && e.passed() && e.instances == 50;
    detail += e.name + "=" + fmt("%.1e", e.max_rel_error) + " ";
  }
  const double secs = seconds_since(t0);
  report(1, pass && secs < 120, detail + fmt("(%.1fs)", secs));
}

// --- criterion 2: RoIAlign oracle ---------------------------------------------------

void criterion2() {
  const auto t0 = Clock::now();
  Rng rng(derive_seed(0, "acceptance/roi"));
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto gh = static_cast<std::size_t>(rng.uniform_int(1, 10));
    const auto gw = static_cast<std::size_t>(rng.uniform_int(1, 10));
    const auto d = static_cast<std::size_t>(rng.uniform_int(1, 8));
    const auto oh = static_cast<std::size_t>(rng.uniform_int(1, 6));
    const auto ow = static_cast<std::size_t>(rng.uniform_int(1, 6));
    std::vector<float> field(gh * gw * d);
    for (auto& v : field) v = static_cast<float>(rng.normal());
    // Boxes cover at least one token cell in each direction.
    const double w = rng.uniform(std::min(1.0, 1.0 / static_cast<double>(gw)), 1.0);
    const double h = rng.uniform(std::min(1.0, 1.0 / static_cast<double>(gh)), 1.0);
    const double x0 = rng.uniform(0.0, 1.0 - w), y0 = rng.uniform(0.0, 1.0 - h);
    const regions::Box box{x0, y0, std::min(1.0, x0 + w), std::min(1.0, y0 + h)};
    const vit::FeatureMap feat{num::TensorF(), num::TensorF::from_data({gh * gw, d}, field), gh, gw};
    const auto out = regions::roi_align(feat, box, oh, ow);
    const auto got = out.tokens.data();
    const auto want = scd::testing::naive_roi_align({field.begin(), field.end()}, gh, gw, d, box.x0, box.y0, box.x1,
                                                    box.y1, oh, ow);
    for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
  }
  const loss::GradSuiteEntry* grad = nullptr;
  for (const auto& e : suite())
    if (e.name == "roi_align") grad = &e;
  const double secs = seconds_since(t0);
  const bool pass = worst < 1e-6 && grad && grad->passed() && secs < 60;
  report(2, pass, "1000 cases max |diff| " + fmt("%.2e", worst) + ", grad rel error " +
                      fmt("%.1e", grad ? grad->max_rel_error : -1.0) + fmt(" (%.1fs)", secs));
}

// --- criterion 3: SCD analytic anchors -------------------------------------------------

double row_entropy_oracle(const TensorD& z, double tau) {
  const std::size_t l = z.rows(), d = z.cols();
  double total = 0;
  for (std::size_t i = 0; i < l; ++i) {
    std::vector<double> logits(l);
    for (std::size_t j = 0; j < l; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < d; ++k) s += z.at(i, k) * z.at(j, k);
      logits[j] = s / tau;
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double zsum = 0;
    for (double v : logits) zsum += std::exp(v - m);
    double h = 0;
    for (double v : logits) {
      const double p = std::exp(v - m) / zsum;
      if (p > 0) h -= p * std::log(p);
    }
    total += h;
  }
  return total / static_cast<double>(l);
}

TensorD random_orthogonal(Rng& rng, std::size_t n) {
  std::vector<std::vector<double>> q;
  while (q.size() < n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    for (const auto& u : q) {
      double dot = 0;
      for (std::size_t k = 0; k < n; ++k) dot += v[k] * u[k];
      for (std::size_t k = 0; k < n; ++k) v[k] -= dot * u[k];
    }
    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (auto& x : v) x /= norm;
    q.push_back(v);
  }
  std::vector<double> flat;
  for (const auto& row : q) flat.insert(flat.end(), row.begin(), row.end());
  return TensorD::from_data({n, n}, flat);
}

void criterion3() {
  double uniform_err = 0, entropy_err = 0, rotation_err = 0;
  for (std::size_t l : {1u, 2u, 5u, 16u}) {
    Rng rng(l);
    std::vector<double> row(4);
    for (auto& x : row) x = rng.normal();
    std::vector<double> flat;
    for (std::size_t i = 0; i < l; ++i) flat.insert(flat.end(), row.begin(), row.end());
    const auto z = TensorD::from_data({l, 4}, flat);
    const auto zs = TensorD::zeros({l, 4});
    uniform_err = std::max(uniform_err, std::abs(loss::scd_loss<double>({zs}, {z}, 0.2, 0.2).item() - std::log(static_cast<double>(l))));
  }
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(seed, "acceptance/scd"));
    const auto l = static_cast<std::size_t>(rng.uniform_int(2, 16));
    const auto d = static_cast<std::size_t>(rng.uniform_int(2, 8));
    const auto zt = scd::testing::random_tensor<double>(rng, {l, d}, false, 1.0 / std::sqrt(static_cast<double>(d)));
    const auto zs = scd::testing::random_tensor<double>(rng, {l, d}, false, 1.0 / std::sqrt(static_cast<double>(d)));
    entropy_err = std::max(entropy_err, std::abs(loss::scd_loss<double>({zt}, {zt}, 0.2, 0.2).item() - row_entropy_oracle(zt, 0.2)));
    const auto q = random_orthogonal(rng, d);
    const double base = loss::scd_loss<double>({zs}, {zt}, 0.2, 0.2).item();
    const double rot = loss::scd_loss<double>({num::matmul(zs, q)}, {num::matmul(zt, q)}, 0.2, 0.2).item();
    rotation_err = std::max(rotation_err, std::abs(base - rot));
  }
  const bool pass = uniform_err < 1e-6 && entropy_err < 1e-6 && rotation_err < 1e-5;
  report(3, pass, "uniform |L - log L| " + fmt("%.1e", uniform_err) + ", self minus entropy " + fmt("%.1e", entropy_err) +
                      ", rotation " + fmt("%.1e", rotation_err) + " (100 seeds)");
}

// --- criterion 4: clone identity ---------------------------------------------------------

void criterion4() {
  const std::uint64_t seed = kSeeds.front();
  const auto& t = teacher(seed, 0.5);
  const refiner::Refiner r(t, refiner::RefinerConfig{}, derive_seed(seed, "refiner/init"));
  const std::size_t g = t.config().grid();
  double worst = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    const Image& img = world(seed).data.test[i].image;
    const auto want = t.forward(img);
    const auto got = r.refine(t, img, regions::Box::whole(), g, g);
    worst = std::max(worst, scd::testing::max_abs_diff(got.tokens.data(), want.tokens.data()));
  }
  report(4, worst < 1e-5, "trained eta=0.5 teacher, 20 images, max |diff| " + fmt("%.2e", worst));
}

// --- criteria 5 and 6: coupling ratio --------------------------------------------------------

struct CrRow {
  double eta0 = 0, eta05 = 0, g2l = 0, l2g = 0;
};
std::map<std::uint64_t, CrRow> g_cr;

const CrRow& cr_row(std::uint64_t seed) {
  auto it = g_cr.find(seed);
  if (it != g_cr.end()) return it->second;
  CrRow row;
  row.eta0 = teacher_cr(seed, 0.0);
  row.eta05 = teacher_cr(seed, 0.5);
  row.g2l = refined_cr(seed, refiner::Direction::global_to_local);
  row.l2g = refined_cr(seed, refiner::Direction::local_to_global);
  std::printf("  [seed %llu] CR eta=0 %.3f  eta=0.5 %.3f  refined G2L %.3f  refined L2G %.3f\n",
              static_cast<unsigned long long>(seed), row.eta0, row.eta05, row.g2l, row.l2g);
  return g_cr.emplace(seed, row).first->second;
}

double stage_sum(std::initializer_list<const char*> names) {
  double s = 0;
  for (const char* n : names) s += g_stage_seconds[n];
  return s;
}

void criterion5() {
  std::vector<double> c0, c05, cr;
  for (auto s : kSeeds) {
    const auto& row = cr_row(s);
    c0.push_back(row.eta0);
    c05.push_back(row.eta05);
    cr.push_back(row.g2l);
  }
  const double m0 = mean(c0), m05 = mean(c05), mr = mean(cr);
  const bool a = m0 >= 0.9 && m0 <= 1.1;
  const bool b = m05 > 1.3;
  const bool c = std::abs(mr - 1) < 0.5 * std::abs(m05 - 1);
  // Stage-1 refiners for L2G belong to criterion 6.
  const double secs = stage_sum({"teacher_eta0", "teacher_eta05", "refiner_g2l", "cr"});
  report(5, a && b && c && secs <= 1200,
         "seed-mean CR eta=0 " + fmt("%.3f", m0) + (a ? " in" : " NOT in") + " [0.9, 1.1]; eta=0.5 " + fmt("%.3f", m05) +
             (b ? " > 1.3" : " NOT > 1.3") + "; refined " + fmt("%.3f", mr) + (c ? " meets" : " misses") +
             " |CR_r - 1| < 0.5 |CR_t - 1|; per seed eta0 " + list(c0) + " eta0.5 " + list(c05) + " refined " + list(cr) +
             fmt(" (%.0fs)", secs));
}

void criterion6() {
  std::size_t wins = 0;
  std::vector<double> g, l;
  for (auto s : kSeeds) {
    const auto& row = cr_row(s);
    const double base = std::abs(row.eta05 - 1);
    g.push_back(base - std::abs(row.g2l - 1));
    l.push_back(base - std::abs(row.l2g - 1));
    if (l.back() < g.back()) ++wins;
  }
  report(6, wins == kSeeds.size(),
         "CR improvement G2L " + list(g) + " vs L2G " + list(l) + ", L2G lower on " + std::to_string(wins) + "/3 seeds");
}

// --- criteria 7 and 8: distillation variants ------------------------------------------------------

struct VariantMetrics {
  double divergence = 0, stuff = 0, things = 0;
};
struct DistillRow {
  VariantMetrics rla, sc, rsc;
};
std::map<std::uint64_t, DistillRow> g_distill;

VariantMetrics run_variant(std::uint64_t seed, int variant) {
  SeedWorld& w = world(seed);
  const auto& t = teacher(seed, 0.5);
  const auto& r = trained_refiner(seed, refiner::Direction::global_to_local);
  pipeline::DistillConfig dc;
  dc.epochs = kDistillEpochs;
  dc.seed = derive_seed(seed, "distill");
  if (variant == 0) dc.weights.lambda = 0;
  if (variant == 2) dc.scd_target = pipeline::ScdTarget::refined;
  const std::vector<data::Scene> train(w.data.train.begin(), w.data.train.begin() + kDistillScenes);
  auto res = timed("distill", [&] {
    return pipeline::distill(t, variant == 2 ? const_cast<refiner::Refiner*>(&r) : nullptr, train, w.protos, dc);
  });
  pipeline::EvalConfig ec;
  ec.seed = derive_seed(seed, "eval");
  ec.cr_pairs = 0;
  const auto m = timed("evaluate", [&] { return pipeline::evaluate_run(res.student, t, nullptr, w.data.test, w.protos, ec); });
  return {m.correlation_divergence, m.student.stuff.top1_accuracy(), m.student.things.top1_accuracy()};
}

const DistillRow& distill_row(std::uint64_t seed) {
  auto it = g_distill.find(seed);
  if (it != g_distill.end()) return it->second;
  DistillRow row{run_variant(seed, 0), run_variant(seed, 1), run_variant(seed, 2)};
  std::printf("  [seed %llu] divergence RLA %.4f SC-RLA %.4f R-SC-RLA %.4f | stuff top-1 %.3f %.3f %.3f | things %.3f %.3f %.3f\n",
              static_cast<unsigned long long>(seed), row.rla.divergence, row.sc.divergence, row.rsc.divergence,
              row.rla.stuff, row.sc.stuff, row.rsc.stuff, row.rla.things, row.sc.things, row.rsc.things);
  return g_distill.emplace(seed, row).first->second;
}

void criterion7() {
  std::size_t wins = 0;
  std::vector<double> rla, sc;
  for (auto s : kSeeds) {
    const auto& row = distill_row(s);
    rla.push_back(row.rla.divergence);
    sc.push_back(row.sc.divergence);
    if (row.rla.divergence > row.sc.divergence) ++wins;
  }
  report(7, wins == kSeeds.size(), "divergence RLA-only " + list(rla, "%.4f") + " vs SC-RLA " + list(sc, "%.4f") + ", " +
                                       std::to_string(wins) + "/3 seeds");
}

void criterion8() {
  std::vector<double> rla, sc, rsc;
  for (auto s : kSeeds) {
    const auto& row = distill_row(s);
    rla.push_back(row.rla.stuff);
    sc.push_back(row.sc.stuff);
    rsc.push_back(row.rsc.stuff);
  }
  const double a = mean(rla), b = mean(sc), c = mean(rsc);
  const double secs = stage_sum({"teacher_eta05", "refiner_g2l", "distill", "evaluate"});
  const bool pass = c >= b && b >= a && c - a > 0 && secs <= 2700;
  auto rel = [](double x, double y) { return x >= y ? " >= " : " < "; };
  report(8, pass, "seed-mean stuff top-1 R-SC-RLA " + fmt("%.3f", c) + rel(c, b) + "SC-RLA " + fmt("%.3f", b) + rel(b, a) +
                      "RLA-only " + fmt("%.3f", a) + "; R-SC-RLA minus RLA-only " + fmt("%+.3f", c - a) + "; per seed RLA " +
                      list(rla) + " SC " + list(sc) + " R-SC " + list(rsc) + fmt(" (%.0fs)", secs));
}

// --- criterion 9: aggregation monotonicity ------------------------------------------------------

constexpr std::size_t kAggregationTargets = 16;

void criterion9() {
  const std::vector<std::size_t> n{1, 2, 4, 8, 16, 32};
  std::size_t ok = 0;
  std::string detail;
  for (auto s : kSeeds) {
    const auto& t = teacher(s, 0.5);
    const auto& test = world(s).data.test;
    // Targets are central crops of the first test scenes. Each target draws its
    // own 32 contexts, in its own order, from the remaining test scenes.
    std::vector<double> curve(n.size(), 0.0);
    for (std::size_t k = 0; k < kAggregationTargets; ++k) {
      std::vector<std::size_t> pool;
      for (std::size_t i = kAggregationTargets; i < test.size(); ++i) pool.push_back(i);
      Rng rng(derive_seed(s, "aggregate/order/" + std::to_string(k)));
      for (std::size_t i = pool.size() - 1; i > 0; --i)
        std::swap(pool[i], pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
      std::vector<Image> contexts;
      for (std::size_t i = 0; i < 32; ++i) contexts.push_back(test[pool[i]].image);
      const Image& scene = test[k].image;
      const std::size_t half = scene.height / 2;
      const Image target = regions::crop_image(scene, {0.25, 0.25, 0.75, 0.75}, half, half);
      const auto res = diag::aggregate_experiment(t, target, contexts, n, derive_seed(s, "aggregate/" + std::to_string(k)));
      for (std::size_t j = 0; j < n.size(); ++j) curve[j] += res.deviation[j] / kAggregationTargets;
    }
    bool mono = true;
    for (std::size_t k = 1; k < curve.size(); ++k) mono = mono && curve[k] <= 1.02 * curve[k - 1];
    if (mono) ++ok;
    detail += list(curve, "%.4f") + " ";
  }
  report(9, ok == kSeeds.size(), "mean deviation over " + std::to_string(kAggregationTargets) +
                                     " targets, N=1..32, per seed " + detail + std::to_string(ok) + "/3 non-increasing");
}

// --- criterion 10: determinism through the command line ---------------------------------------------

int run_in(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" SCD_CLI "' " + args + " > stdout.txt 2>&1";
  return std::system(cmd.c_str());
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void criterion10() {
  const fs::path root = fs::temp_directory_path() / "scd_acceptance_determinism";
  fs::remove_all(root);
  const std::vector<std::string> steps{
      "gen-data --seed 5 --count 60 --out data",
      "pretrain-teacher --config run.conf --out teacher",
      "train-refiner --config run.conf --teacher teacher/teacher.scdk --out refiner",
      "distill --config run.conf --teacher teacher/teacher.scdk --refiner refiner/refiner.scdk --set "
      "pipeline.scd_target=refined --out distill",
      "evaluate --config run.conf --student distill/student.scdk --teacher teacher/teacher.scdk --refiner "
      "refiner/refiner.scdk --out eval",
      "diagnose-cr --config run.conf --model teacher/teacher.scdk --refiner refiner/refiner.scdk --out cr",
      "aggregate-demo --config run.conf --teacher teacher/teacher.scdk --n 1,2,4 --out aggregate",
      "affinity --config run.conf --model distill/student.scdk --image-idx 1 --query 3,4 --out affinity",
      "grad-check",
  };
  const char* conf =
      "seed = 5\ndata.dir = data\ndata.count = 60\nteacher.epochs = 1\nteacher.min_accuracy = 0\n"
      "refiner.epochs = 1\npipeline.epochs = 1\neval.cr_pairs = 4\n";
  bool ran = true;
  std::size_t files = 0, differing = 0;
  std::vector<fs::path> runs{root / "a", root / "b"};
  for (const auto& dir : runs) {
    fs::create_directories(dir);
    std::ofstream(dir / "run.conf") << conf;
    for (const auto& s : steps) {
      if (run_in(dir, s) != 0) {
        ran = false;
        std::printf("  command failed in %s: %s\n", dir.string().c_str(), s.c_str());
      }
      std::ofstream(dir / "all_stdout.txt", std::ios::app) << read_file(dir / "stdout.txt");
    }
  }
  std::set<fs::path> names;
  for (const auto& e : fs::recursive_directory_iterator(runs[0]))
    if (e.is_regular_file()) names.insert(fs::relative(e.path(), runs[0]));
  for (const auto& e : fs::recursive_directory_iterator(runs[1]))
    if (e.is_regular_file()) names.insert(fs::relative(e.path(), runs[1]));
  for (const auto& n : names) {
    ++files;
    if (!fs::exists(runs[0] / n) || !fs::exists(runs[1] / n) || read_file(runs[0] / n) != read_file(runs[1] / n)) {
      ++differing;
      std::printf("  differs: %s\n", n.string().c_str());
    }
  }
  const bool pass = ran && differing == 0 && files > 20;
  report(10, pass, std::to_string(steps.size()) + " subcommands run twice, " + std::to_string(files) + " files compared, " +
                       std::to_string(differing) + " differ");
  if (pass) fs::remove_all(root);
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<void()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                    criterion6, criterion7, criterion8, criterion9, criterion10};
  std::setvbuf(stdout, nullptr, _IOLBF, 0);
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.count(static_cast<int>(i + 1))) continue;
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      report(static_cast<int>(i + 1), false, std::string("exception: ") + e.what());
    }
  }
  std::printf("stage seconds:");
  for (const auto& [k, v] : g_stage_seconds) std::printf(" %s=%.0f", k.c_str(), v);
  std::printf(" total=%.0f\n", seconds_since(t0));
  return g_any_failed ? 1 : 0;
}
