#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "scd/diagnostics/diagnostics.hpp"
#include "scd/io/config.hpp"
#include "scd/io/container.hpp"
#include "scd/io/dataset_io.hpp"
#include "scd/io/outputs.hpp"
#include "scd/losses/grad_suite.hpp"
#include "scd/pipeline/distill.hpp"
#include "scd/pipeline/evaluate.hpp"
#include "scd/pipeline/run_config.hpp"
#include "scd/pipeline/teacher.hpp"
#include "scd/refiner/refiner.hpp"
#include "scd/regions/regions.hpp"
#include "scd/synthdata/synthdata.hpp"
#include "scd/vit/encoder.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace scd;

namespace {

constexpr const char* kResolvedConfig = "resolved.conf";

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* app, Common& c, bool config_required = false) {
  auto* opt = app->add_option("--config", c.config, "key=value config file");
  if (config_required) opt->required();
  app->add_option("--set", c.overrides, "override a config key (key=value)");
  app->add_option("--out", c.out, "output directory (overrides out_dir)");
}

io::Config resolve(const Common& c) {
  io::Config cfg = pipeline::default_config();
  if (!c.config.empty()) cfg.load_file(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw io::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!c.out.empty()) cfg.set("out_dir", c.out);
  return cfg;
}

fs::path prepare_out(const io::Config& cfg, const std::string& key = "out_dir") {
  const fs::path dir = cfg.get(key);
  fs::create_directories(dir);
  cfg.write(dir / kResolvedConfig);
  return dir;
}

vit::Encoder load_encoder(const io::Config& cfg, const fs::path& path) {
  vit::Encoder enc(pipeline::encoder_config(cfg), pipeline::seed_for(cfg, "encoder/init"));
  auto params = enc.parameters();
  io::load_parameters(path, params);
  enc.set_frozen(true);
  return enc;
}

refiner::Refiner load_refiner(const io::Config& cfg, const vit::Encoder& teacher, const fs::path& path) {
  refiner::Refiner r(teacher, pipeline::refiner_config(cfg), pipeline::seed_for(cfg, "refiner/init"));
  auto params = r.parameters();
  io::load_parameters(path, params);
  r.set_frozen(true);
  return r;
}

void save(const fs::path& path, const num::ParameterList& params) { io::save_parameters(path, params); }

data::ClassPrototypes load_protos(const io::Config& cfg) {
  return pipeline::load_prototypes(fs::path(cfg.get("data.dir")) / pipeline::kPrototypeFile);
}

std::vector<Image> images_of(const std::vector<data::Scene>& scenes) {
  std::vector<Image> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(s.image);
  return out;
}

const data::Scene& scene_at(const std::vector<data::Scene>& scenes, std::size_t idx) {
  if (idx >= scenes.size()) {
    throw std::invalid_argument("image index " + std::to_string(idx) + " out of range (test split has " +
                                std::to_string(scenes.size()) + " scenes)");
  }
  return scenes[idx];
}

json coupling_json(const diag::CouplingReport& r) {
  return {{"cr", r.cr}, {"pairs", r.pairs}, {"tokens", r.tokens}, {"skipped", r.skipped},
          {"reportable", r.reportable()}, {"per_pair", r.per_pair}};
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::logic_error&) {
      throw std::invalid_argument("expected a comma-separated list of positive integers, got '" + text + "'");
    }
  }
  if (out.empty()) throw std::invalid_argument("empty list '" + text + "'");
  return out;
}

std::pair<std::size_t, std::size_t> parse_query(const std::string& text) {
  const auto comma = text.find(',');
  try {
    if (comma == std::string::npos) throw std::invalid_argument(text);
    std::size_t u1 = 0, u2 = 0;
    const std::string a = text.substr(0, comma), b = text.substr(comma + 1);
    const long r = std::stol(a, &u1), c = std::stol(b, &u2);
    if (u1 != a.size() || u2 != b.size() || r < 0 || c < 0) throw std::invalid_argument(text);
    return {static_cast<std::size_t>(r), static_cast<std::size_t>(c)};
  } catch (const std::logic_error&) {
    throw std::invalid_argument("expected --query r,c with non-negative integers, got '" + text + "'");
  }
}

// --- subcommands -------------------------------------------------------------

int gen_data(const Common& common, std::optional<std::uint64_t> seed, std::optional<std::size_t> count,
             std::optional<std::size_t> dim) {
  io::Config cfg = resolve(common);
  if (seed) cfg.set("seed", std::to_string(*seed));
  if (count) cfg.set("data.count", std::to_string(*count));
  if (dim) cfg.set("vit.dim", std::to_string(*dim));
  if (!common.out.empty()) cfg.set("data.dir", common.out);
  const auto enc = pipeline::encoder_config(cfg);

  data::GeneratorParams gp;
  gp.image_size = enc.image_size;
  gp.patch_size = enc.patch_size;
  const auto dataset = data::generate(pipeline::seed_for(cfg, "data"), static_cast<std::size_t>(cfg.get_int("data.count")), gp);
  const auto protos = data::prototypes(pipeline::seed_for(cfg, "data/prototypes"), data::kNumClasses, enc.dim);

  const fs::path dir = prepare_out(cfg, "data.dir");
  io::save_dataset(dir, dataset);
  pipeline::save_prototypes(dir / pipeline::kPrototypeFile, protos);
  std::cout << "train " << dataset.train.size() << " val " << dataset.val.size() << " test " << dataset.test.size()
            << " -> " << dir.string() << "\n";
  return 0;
}

int pretrain_teacher(const Common& common) {
  const io::Config cfg = resolve(common);
  const auto dataset = io::load_dataset(cfg.get("data.dir"));
  const auto protos = load_protos(cfg);
  const fs::path out = prepare_out(cfg);

  vit::Encoder enc(pipeline::encoder_config(cfg), pipeline::seed_for(cfg, "encoder/init"));
  io::JsonlWriter log(out / "teacher_metrics.jsonl");
  const auto res = pipeline::pretrain_teacher(enc, dataset, protos, pipeline::teacher_config(cfg),
                                              [&](const pipeline::TeacherStep& s) {
                                                log.write({{"step", s.step}, {"loss", s.loss}, {"l_patch", s.l_patch},
                                                           {"l_hist", s.l_hist}, {"l_cls", s.l_cls}, {"lr", s.lr}});
                                              });
  save(out / "teacher.scdk", enc.parameters());
  io::write_json(out / "teacher_summary.json", {{"val_accuracy", res.val_accuracy}, {"steps", res.steps.size()}});
  std::cout << "val accuracy " << res.val_accuracy << "\n";
  return 0;
}

int train_refiner(const Common& common, const std::string& teacher_path) {
  const io::Config cfg = resolve(common);
  const auto dataset = io::load_dataset(cfg.get("data.dir"));
  const fs::path out = prepare_out(cfg);
  const auto teacher = load_encoder(cfg, teacher_path);

  refiner::Refiner r(teacher, pipeline::refiner_config(cfg), pipeline::seed_for(cfg, "refiner/init"));
  io::JsonlWriter log(out / "refiner_metrics.jsonl");
  const auto res = refiner::train_refiner(r, teacher, images_of(dataset.train), images_of(dataset.val),
                                          pipeline::refiner_train_config(cfg), [&](const refiner::RefinerStep& s) {
                                            log.write({{"step", s.step}, {"loss", s.loss}, {"lr", s.lr}});
                                          });
  save(out / "refiner.scdk", r.parameters());
  io::write_json(out / "refiner_summary.json",
                 {{"heldout_before", res.heldout_before}, {"heldout_after", res.heldout_after}, {"steps", res.steps.size()}});
  std::cout << "held-out loss " << res.heldout_before << " -> " << res.heldout_after << "\n";
  return 0;
}

int distill(const Common& common, const std::string& teacher_path, const std::string& refiner_path) {
  const io::Config cfg = resolve(common);
  const auto dcfg = pipeline::distill_config(cfg);
  const bool needs_refiner = dcfg.scd_target == pipeline::ScdTarget::refined || dcfg.e2e;
  if (needs_refiner && refiner_path.empty()) {
    throw std::invalid_argument("scd_target=refined and e2e runs need --refiner");
  }
  const auto dataset = io::load_dataset(cfg.get("data.dir"));
  const auto protos = load_protos(cfg);
  const fs::path out = prepare_out(cfg);
  const auto teacher = load_encoder(cfg, teacher_path);

  std::optional<refiner::Refiner> ref;
  if (!refiner_path.empty()) {
    ref.emplace(load_refiner(cfg, teacher, refiner_path));
    if (dcfg.e2e) ref->set_frozen(false);
  }

  io::JsonlWriter log(out / "metrics.jsonl");
  auto res = pipeline::distill(teacher, ref ? &*ref : nullptr, dataset.train, protos, dcfg,
                               [&](const pipeline::DistillStep& s) { log.write(pipeline::step_json(s, dcfg.e2e)); });

  pipeline::RunRecord rec;
  rec.config = cfg.dump();
  rec.seed = cfg.get_u64("seed");
  rec.steps = res.steps;
  rec.aborted = res.aborted;
  rec.abort_reason = res.abort_reason;
  save(out / "student.scdk", res.student.parameters());
  rec.checkpoints["student"] = (out / "student.scdk").string();
  if (ref && dcfg.e2e) {
    save(out / "refiner_e2e.scdk", ref->parameters());
    rec.checkpoints["refiner"] = (out / "refiner_e2e.scdk").string();
  }
  io::write_json(out / "run_record.json", rec.to_json());
  if (res.aborted) throw num::NonFiniteError("distillation aborted: " + res.abort_reason + "; last good student saved");
  std::cout << "steps " << res.steps.size() << " -> " << (out / "student.scdk").string() << "\n";
  return 0;
}

int evaluate(const Common& common, const std::string& student_path, const std::string& teacher_path,
             const std::string& refiner_path, const std::string& data_dir) {
  io::Config cfg = resolve(common);
  if (!data_dir.empty()) cfg.set("data.dir", data_dir);
  const auto dataset = io::load_dataset(cfg.get("data.dir"));
  const auto protos = load_protos(cfg);
  const fs::path out = prepare_out(cfg);
  const auto teacher = load_encoder(cfg, teacher_path);
  const auto student = load_encoder(cfg, student_path);
  std::optional<refiner::Refiner> ref;
  if (!refiner_path.empty()) ref.emplace(load_refiner(cfg, teacher, refiner_path));

  const auto m = pipeline::evaluate_run(student, teacher, ref ? &*ref : nullptr, dataset.test, protos,
                                        pipeline::eval_config(cfg));
  io::write_json(out / "metrics.json", m.to_json());
  std::cout << "stuff top-1 " << m.student.stuff.top1_accuracy() << " things top-1 " << m.student.things.top1_accuracy()
            << " divergence " << m.correlation_divergence << "\n";
  return 0;
}

int diagnose_cr(const Common& common, const std::string& model_path, const std::string& refiner_path,
                const std::string& data_dir) {
  io::Config cfg = resolve(common);
  if (!data_dir.empty()) cfg.set("data.dir", data_dir);
  const auto dataset = io::load_dataset(cfg.get("data.dir"));
  const fs::path out = prepare_out(cfg);
  const auto model = load_encoder(cfg, model_path);
  const auto ecfg = pipeline::eval_config(cfg);

  std::vector<std::pair<Image, Image>> pairs;
  for (std::size_t i = 0; i + 1 < dataset.test.size() && pairs.size() < ecfg.cr_pairs; i += 2) {
    pairs.emplace_back(dataset.test[i].image, dataset.test[i + 1].image);
  }
  const std::size_t grid = model.config().grid();
  json doc = {{"model", coupling_json(diag::coupling_ratio(diag::encoder_pathway(model), pairs, grid))}};
  if (!refiner_path.empty()) {
    const auto ref = load_refiner(cfg, model, refiner_path);
    doc["refined"] = coupling_json(diag::coupling_ratio(diag::refiner_pathway(ref, model), pairs, grid));
  }
  io::write_json(out / "coupling.json", doc);
  std::cout << "CR " << doc["model"]["cr"].get<double>();
  if (doc.contains("refined")) std::cout << " refined " << doc["refined"]["cr"].get<double>();
  std::cout << " over " << pairs.size() << " pairs\n";
  return 0;
}

int aggregate_demo(const Common& common, const std::string& teacher_path, const std::string& data_dir,
                   const std::string& n_text, std::size_t image_idx) {
  io::Config cfg = resolve(common);
  if (!data_dir.empty()) cfg.set("data.dir", data_dir);
  const auto n_values = parse_sizes(n_text);
  const auto dataset = io::load_dataset(cfg.get("data.dir"));
  const fs::path out = prepare_out(cfg);
  const auto teacher = load_encoder(cfg, teacher_path);

  // Target: the central half of the chosen scene, pasted into the other test scenes.
  const Image& scene = scene_at(dataset.test, image_idx).image;
  const std::size_t half = scene.height / 2;
  const Image target = regions::crop_image(scene, {0.25, 0.25, 0.75, 0.75}, half, half);
  std::vector<Image> contexts;
  for (std::size_t i = 0; i < dataset.test.size(); ++i) {
    if (i != image_idx) contexts.push_back(dataset.test[i].image);
  }
  const auto res = diag::aggregate_experiment(teacher, target, contexts, n_values, pipeline::seed_for(cfg, "aggregate"));

  // Per-token distance of each aggregate to the largest-N aggregate.
  const auto& last = res.aggregates.back();
  const std::size_t l = res.grid_h * res.grid_w, d = last.cols();
  for (std::size_t k = 0; k < res.n_values.size(); ++k) {
    std::vector<float> dist(l);
    const auto a = res.aggregates[k].data();
    const auto b = last.data();
    for (std::size_t t = 0; t < l; ++t) {
      double s = 0;
      for (std::size_t j = 0; j < d; ++j) s += (a[t * d + j] - b[t * d + j]) * (a[t * d + j] - b[t * d + j]);
      dist[t] = static_cast<float>(std::sqrt(s));
    }
    io::write_pgm(out / ("aggregate_n" + std::to_string(res.n_values[k]) + ".pgm"), dist, res.grid_h, res.grid_w);
  }
  io::write_json(out / "aggregate.json", {{"image_idx", image_idx}, {"n", res.n_values}, {"deviation", res.deviation}});
  for (std::size_t k = 0; k < res.n_values.size(); ++k) {
    std::cout << "N=" << res.n_values[k] << " deviation " << res.deviation[k] << "\n";
  }
  return 0;
}

int affinity(const Common& common, const std::string& model_path, const std::string& data_dir, std::size_t image_idx,
             const std::string& query) {
  io::Config cfg = resolve(common);
  if (!data_dir.empty()) cfg.set("data.dir", data_dir);
  const auto q = parse_query(query);
  const auto dataset = io::load_dataset(cfg.get("data.dir"));
  const fs::path out = prepare_out(cfg);
  const auto model = load_encoder(cfg, model_path);

  const auto map = diag::affinity_map(model.forward(scene_at(dataset.test, image_idx).image), q.first, q.second);
  const std::vector<float> values(map.values.begin(), map.values.end());
  const fs::path pgm = out / ("affinity_" + std::to_string(image_idx) + "_" + std::to_string(q.first) + "_" +
                              std::to_string(q.second) + ".pgm");
  io::write_pgm(pgm, values, map.grid_h, map.grid_w);
  std::cout << pgm.string() << "\n";
  return 0;
}

int grad_check(std::uint64_t seed) {
  std::size_t failed = 0;
  for (const auto& e : loss::run_grad_suite(seed)) {
    std::printf("%-16s %s  max_rel_error %.3e over %zu instances\n", e.name.c_str(), e.passed() ? "PASS" : "FAIL",
                e.max_rel_error, e.instances);
    if (!e.passed()) ++failed;
  }
  if (failed) {
    std::printf("ERROR grad_check: %zu check(s) above tolerance %.0e\n", failed, loss::kGradTolerance);
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial correlation distillation on synthetic scenes"};
  app.require_subcommand(1);

  Common common;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> count, dim;
  std::string teacher, refiner_path, student, model, data_dir, n_text = "1,2,4,8,16,32", query;
  std::size_t image_idx = 0;
  std::uint64_t grad_seed = 0;

  auto* gen = app.add_subcommand("gen-data", "generate dataset splits and class prototypes");
  add_common(gen, common);
  gen->add_option("--seed", seed, "root seed");
  gen->add_option("--count", count, "number of scenes");
  gen->add_option("--dim", dim, "prototype dimension (vit.dim)");

  auto* pre = app.add_subcommand("pretrain-teacher", "train the context-contaminated teacher");
  add_common(pre, common, true);

  auto* tr = app.add_subcommand("train-refiner", "train the Refiner against a frozen teacher");
  add_common(tr, common, true);
  tr->add_option("--teacher", teacher, "teacher checkpoint")->required();

  auto* dis = app.add_subcommand("distill", "fine-tune a student with RLA and SCD");
  add_common(dis, common, true);
  dis->add_option("--teacher", teacher, "teacher checkpoint")->required();
  dis->add_option("--refiner", refiner_path, "refiner checkpoint");

  auto* ev = app.add_subcommand("evaluate", "dense recognition and spatial metrics");
  add_common(ev, common);
  ev->add_option("--student", student, "student checkpoint")->required();
  ev->add_option("--teacher", teacher, "teacher checkpoint")->required();
  ev->add_option("--refiner", refiner_path, "refiner checkpoint");
  ev->add_option("--data", data_dir, "dataset directory");

  auto* cr = app.add_subcommand("diagnose-cr", "coupling ratio of a model");
  add_common(cr, common);
  cr->add_option("--model", model, "encoder checkpoint")->required();
  cr->add_option("--refiner", refiner_path, "refiner checkpoint (also report the refined CR)");
  cr->add_option("--data", data_dir, "dataset directory");

  auto* agg = app.add_subcommand("aggregate-demo", "context aggregation deviation curve");
  add_common(agg, common);
  agg->add_option("--teacher", teacher, "teacher checkpoint")->required();
  agg->add_option("--data", data_dir, "dataset directory");
  agg->add_option("--n", n_text, "context counts, comma separated");
  agg->add_option("--image-idx", image_idx, "target scene in the test split");

  auto* aff = app.add_subcommand("affinity", "affinity heatmap of one query token");
  add_common(aff, common);
  aff->add_option("--model", model, "encoder checkpoint")->required();
  aff->add_option("--data", data_dir, "dataset directory");
  aff->add_option("--image-idx", image_idx, "scene in the test split")->required();
  aff->add_option("--query", query, "token row,col")->required();

  auto* gc = app.add_subcommand("grad-check", "finite-difference check of every loss");
  gc->add_option("--seed", grad_seed, "suite seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cout << "ERROR invalid_argument: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*gen) return gen_data(common, seed, count, dim);
    if (*pre) return pretrain_teacher(common);
    if (*tr) return train_refiner(common, teacher);
    if (*dis) return distill(common, teacher, refiner_path);
    if (*ev) return evaluate(common, student, teacher, refiner_path, data_dir);
    if (*cr) return diagnose_cr(common, model, refiner_path, data_dir);
    if (*agg) return aggregate_demo(common, teacher, data_dir, n_text, image_idx);
    if (*aff) return affinity(common, model, data_dir, image_idx, query);
    if (*gc) return grad_check(grad_seed);
  } catch (const pipeline::TrainingAborted& e) {
    std::cout << "ERROR " << e.code() << ": " << e.what() << "\n";
  } catch (const io::ConfigError& e) {
    std::cout << "ERROR config_error: " << e.what() << "\n";
  } catch (const io::IoError& e) {
    std::cout << "ERROR io_error: " << e.what() << "\n";
  } catch (const num::ShapeError& e) {
    std::cout << "ERROR shape_error: " << e.what() << "\n";
  } catch (const num::NonFiniteError& e) {
    std::cout << "ERROR non_finite: " << e.what() << "\n";
  } catch (const std::invalid_argument& e) {
    std::cout << "ERROR invalid_argument: " << e.what() << "\n";
  } catch (const fs::filesystem_error& e) {
    std::cout << "ERROR io_error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cout << "ERROR internal: " << e.what() << "\n";
  }
  return 1;
}
