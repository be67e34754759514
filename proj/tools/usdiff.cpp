// usdiff command-line driver. Every command takes --config (JSON whose keys
// are the long option names), --seed and --out; flags given on the command
// line win over config values. Errors are one JSON line on stderr.

#include <omp.h>

#include <CLI11.hpp>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "usdiff/data/busi.hpp"
#include "usdiff/data/manifest.hpp"
#include "usdiff/data/phantom.hpp"
#include "usdiff/eval/experiments.hpp"
#include "usdiff/eval/verify.hpp"
#include "usdiff/io/hash.hpp"
#include "usdiff/service/server.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace usdiff;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
}

void write_json(const std::string& path, const json& j) {
  if (auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write " + path);
}

std::string option_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

// Feeds config values into options that were not given on the command line.
void apply_config(CLI::App& cmd, const json& cfg, const std::vector<std::string>& skip = {}) {
  if (!cfg.is_object()) throw UsageError("config: top level must be an object");
  for (auto it = cfg.begin(); it != cfg.end(); ++it) {
    if (std::find(skip.begin(), skip.end(), it.key()) != skip.end()) continue;
    CLI::Option* opt = nullptr;
    try {
      opt = cmd.get_option(option_name(it.key()));
    } catch (const CLI::OptionNotFound&) {
    }
    if (!opt || it.key() == "config") throw UsageError("config: unknown key '" + it.key() + "' for " + cmd.get_name());
    if (opt->count() > 0) continue;
    auto add = [&](const json& v) {
      opt->add_result(v.is_string() ? v.get<std::string>() : v.dump());
    };
    if (it->is_array()) {
      for (const auto& v : *it) add(v);
    } else {
      add(*it);
    }
    opt->run_callback();
  }
}

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_help, bool out_required) {
  cmd->add_option("--config", c.config, "JSON file of option values")->check(CLI::ExistingFile);
  c.seed_opt = cmd->add_option("--seed", c.seed, "Random seed");
  auto* o = cmd->add_option("--out", c.out, out_help);
  if (out_required) o->required();
}

void load_config(CLI::App* cmd, const Common& c) {
  if (!c.config.empty()) apply_config(*cmd, read_json(c.config));
}

std::string b64_of_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  return io::base64_encode({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
}

std::uint64_t fresh_seed() {
  std::random_device rd;
  return ((std::uint64_t(rd()) << 32) | rd()) >> 11;
}

// ---- commands ----------------------------------------------------------------

struct SynthArgs {
  int n = 780;
  int image_size = 64;
  double artifact_rate = 0.1;
};

int cmd_synth(const Common& c, const SynthArgs& a) {
  data::PhantomOptions opt;
  opt.image_size = a.image_size;
  opt.artifact_rate = a.artifact_rate;
  auto d = data::synth_generate(a.n, data::kBusiMix, c.seed, opt);
  data::assign_splits(d, {}, c.seed);
  data::save_manifest(d, c.out);
  const auto k = d.class_counts();
  std::printf("synth-data: %d samples (normal %d, benign %d, malignant %d) -> %s\n", a.n, k[0], k[1], k[2],
              c.out.c_str());
  return 0;
}

int cmd_ingest(const Common& c, const std::string& dir, int image_size) {
  auto r = data::ingest_busi(dir, image_size);
  for (const auto& s : r.issues) std::fprintf(stderr, "%s\n", json{{"warning", "skipped"}, {"message", s}}.dump().c_str());
  data::assign_splits(r.dataset, {}, c.seed);
  r.dataset.seed = c.seed;
  data::save_manifest(r.dataset, c.out);
  const auto k = r.dataset.class_counts();
  std::printf("ingest: %zu samples (normal %d, benign %d, malignant %d), %zu skipped -> %s\n",
              r.dataset.samples.size(), k[0], k[1], k[2], r.issues.size(), c.out.c_str());
  return 0;
}

struct TrainArgs {
  std::string stage, dataset, parent, resume, log, split;
  int steps = 0, batch_size = 0;
  double lr = 0, condition_dropout = 0;
};

int cmd_train(CLI::App* cmd, const Common& c, const TrainArgs& a) {
  train::TrainConfig cfg;
  if (!c.config.empty()) {
    try {
      cfg = read_json(c.config).get<train::TrainConfig>();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    } catch (const json::exception& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
  }
  cfg.stage = train::parse_stage(a.stage);
  auto given = [&](const char* name) { return cmd->get_option(name)->count() > 0; };
  if (given("--dataset")) cfg.dataset = a.dataset;
  if (given("--parent")) cfg.parent = a.parent;
  if (given("--resume")) cfg.resume = a.resume;
  if (given("--log")) cfg.log = a.log;
  if (given("--split")) cfg.split = a.split;
  if (given("--steps")) cfg.steps = a.steps;
  if (given("--batch-size")) cfg.batch_size = a.batch_size;
  if (given("--lr")) cfg.lr = a.lr;
  if (given("--condition-dropout")) cfg.condition_dropout = a.condition_dropout;
  if (c.seed_opt->count() > 0) cfg.seed = c.seed;
  if (!c.out.empty()) cfg.out = c.out;
  auto ck = train::run_training(cfg);
  std::printf("train %s: step %lld -> %s sha256 %s\n", train::stage_name(cfg.stage), static_cast<long long>(ck.step),
              cfg.out.c_str(), ck.hash.c_str());
  return 0;
}

struct GenerateArgs {
  std::string diffusion, control, prompt, mask, sampler = "ddim";
  int class_id = -1, count = 1, steps = 50;
  double guidance = 3.0, eta = 0.0;
};

int cmd_generate(const Common& c, const GenerateArgs& a, bool seed_given) {
  json body = {{"sampler", a.sampler}, {"steps", a.steps}, {"guidance", a.guidance}, {"eta", a.eta}, {"count", a.count}};
  if (!a.prompt.empty()) body["prompt"] = a.prompt;
  if (a.class_id >= 0) body["class_id"] = a.class_id;
  if (!a.mask.empty()) body["mask"] = b64_of_file(a.mask);
  body["seed"] = seed_given ? c.seed : fresh_seed();

  service::GenerationEngine engine(a.diffusion, a.control);
  const auto req = service::parse_request(body, engine.image_size(), engine.max_timestep(), 0);
  const auto res = engine.generate(req);

  fs::create_directories(c.out);
  json files = json::array();
  for (std::size_t i = 0; i < res.png.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%02zu.png", i);
    std::ofstream f(fs::path(c.out) / name, std::ios::binary);
    f.write(res.png[i].data(), static_cast<std::streamsize>(res.png[i].size()));
    if (!f) throw std::runtime_error(std::string("cannot write ") + name);
    files.push_back({{"file", name}, {"sha256", io::sha256_hex(res.png[i])}});
  }
  json meta = {{"request", service::request_echo(req)},
               {"seed_used", res.seed_used},
               {"checkpoints", {{"diffusion", engine.diffusion_hash()},
                                {"control", engine.control_available() ? json(engine.control_hash()) : json(nullptr)}}},
               {"files", files},
               {"timings_ms", {{"sampling", res.sampling_ms}, {"encode", res.encode_ms}}}};
  if (!a.mask.empty()) meta["request"]["mask"] = a.mask;  // path instead of the base64 payload
  write_json((fs::path(c.out) / "metadata.json").string(), meta);
  std::printf("generate: %zu images, seed %llu -> %s\n", res.png.size(),
              static_cast<unsigned long long>(res.seed_used), c.out.c_str());
  return 0;
}

struct EvalArgs {
  std::string dataset, diffusion, codec, control;
  int per_class = 100, sample_steps = 50, classifier_steps = 600, diffusion_steps = 2000, batch_size = 32,
      permutations = 200, count = 100;
  double guidance = 3.0, fraction = 0.2, lr = 1e-4;
};

diffusion::SamplerConfig sampler_of(const EvalArgs& a, std::uint64_t seed) {
  diffusion::SamplerConfig sc;
  sc.steps = a.sample_steps;
  sc.guidance_scale = a.guidance;
  sc.seed = seed;
  return sc;
}

eval::ClassifierRun classifier_of(const EvalArgs& a, std::uint64_t seed) {
  eval::ClassifierRun r;
  r.steps = a.classifier_steps;
  r.seed = seed;
  return r;
}

int cmd_eval_augment(const Common& c, const EvalArgs& a) {
  const auto real = data::load_manifest(a.dataset);
  auto gen_ck = train::load_checkpoint(a.diffusion);
  eval::check_leakage(gen_ck.trained_on, real, real.indices(data::Split::test));
  const auto gen = train::Bundle::bind(gen_ck);
  const auto generated = eval::generate_dataset(gen, {a.per_class, a.per_class, a.per_class}, sampler_of(a, c.seed));
  auto r = eval::run_augmentation_experiment(real, generated, gen_ck.trained_on, classifier_of(a, c.seed));
  json j = {{"experiment", "augment"},
            {"baseline", r.baseline},
            {"augmented", r.augmented},
            {"delta_auc", r.delta_auc},
            {"baseline_classifier", r.baseline_hash},
            {"augmented_classifier", r.augmented_hash},
            {"generator", gen_ck.hash},
            {"passed", r.augmented.auc.macro >= r.baseline.auc.macro - 0.02}};
  write_json(c.out, j);
  std::printf("evaluate augment: baseline AUC %.4f augmented AUC %.4f delta %+.4f -> %s\n", r.baseline.auc.macro,
              r.augmented.auc.macro, r.delta_auc, c.out.c_str());
  return 0;
}

int cmd_eval_coverage(const Common& c, const EvalArgs& a) {
  const auto real = data::load_manifest(a.dataset);
  const auto codec = train::load_checkpoint(a.codec);
  eval::CoverageConfig cfg;
  cfg.fraction = a.fraction;
  cfg.diffusion.steps = a.diffusion_steps;
  cfg.diffusion.batch_size = a.batch_size;
  cfg.diffusion.lr = a.lr;
  cfg.diffusion.seed = c.seed;
  cfg.per_class = a.per_class;
  cfg.sampler = sampler_of(a, c.seed);
  cfg.classifier = classifier_of(a, c.seed);
  cfg.permutations = a.permutations;
  cfg.seed = c.seed;
  auto r = eval::run_coverage_experiment(real, codec, cfg);
  json j = {{"experiment", "coverage"},     {"report", r.report},         {"null_quantile_99_7", r.null_quantile},
            {"null_aucs", r.null_aucs},     {"beats_null", r.beats_null}, {"fraction", a.fraction}};
  write_json(c.out, j);
  std::printf("evaluate coverage: AUC %.4f null p99.7 %.4f beats_null %s -> %s\n", r.report.auc.macro,
              r.null_quantile, r.beats_null ? "true" : "false", c.out.c_str());
  return 0;
}

int cmd_eval_mask(const Common& c, const EvalArgs& a) {
  const auto real = data::load_manifest(a.dataset);
  auto ck = train::load_checkpoint(a.control);
  const auto b = train::Bundle::bind(ck);
  std::vector<std::size_t> idx;
  for (auto s : {data::Split::test, data::Split::val}) {
    for (auto i : real.indices(s)) {
      if (real.samples[i].class_id != data::kNormal && static_cast<int>(idx.size()) < a.count) idx.push_back(i);
    }
  }
  eval::check_leakage(ck.trained_on, real, idx);
  auto r = eval::run_mask_adherence(b, real, idx, sampler_of(a, c.seed));
  json j = {{"experiment", "mask-iou"},
            {"masks", idx.size()},
            {"mean_iou", r.mean_iou},
            {"shuffled_mean_iou", r.shuffled_mean_iou},
            {"per_mask", r.per_mask},
            {"control", ck.hash},
            {"passed", r.mean_iou >= 2 * r.shuffled_mean_iou}};
  write_json(c.out, j);
  std::printf("evaluate mask-iou: %zu masks mean IoU %.4f shuffled %.4f -> %s\n", idx.size(), r.mean_iou,
              r.shuffled_mean_iou, c.out.c_str());
  return 0;
}

int cmd_verify(const Common& c, const std::vector<std::string>& ckpts, int grad_seeds, bool skip_suite) {
  std::vector<eval::CheckResult> results;
  if (!skip_suite) {
    eval::VerifyOptions opt;
    opt.seed = c.seed;
    opt.grad_seeds = grad_seeds;
    results = eval::run_invariant_suite(opt);
  }
  for (const auto& p : ckpts) {
    try {
      results.push_back(eval::verify_checkpoint_file(p));
      results.back().name += ":" + p;
    } catch (const std::exception& e) {
      results.push_back({"checkpoint.file:" + p, false, 1.0, 0.0, e.what()});
    }
  }
  bool ok = true;
  for (const auto& r : results) {
    ok = ok && r.passed;
    std::printf("%s %s value=%.3g tol=%.3g%s%s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.value, r.tolerance,
                r.detail.empty() ? "" : " ", r.detail.c_str());
  }
  if (!c.out.empty()) write_json(c.out, {{"passed", ok}, {"checks", results}});
  for (const auto& r : results) {
    if (!r.passed) {
      std::fprintf(stderr, "%s\n", json{{"error", "verify"}, {"message", r.name + ": " + r.detail}}.dump().c_str());
      break;
    }
  }
  return ok ? 0 : 1;
}

service::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const Common& c, service::ServerConfig cfg) {
  cfg.seed = c.seed;
  cfg.apply_env();
  service::Server server(cfg);
  const int port = server.bind();
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::printf("serve: listening on http://%s:%d (max_concurrent %d)\n", cfg.host.c_str(), port, cfg.max_concurrent);
  std::fflush(stdout);
  server.run();
  g_server = nullptr;
  return 0;
}

void fail(const std::string& kind, const std::string& msg) {
  std::fprintf(stderr, "%s\n", json{{"error", kind}, {"message", msg}}.dump().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent diffusion for B-mode ultrasound phantoms", "usdiff"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads (default: all cores)")->check(CLI::NonNegativeNumber);

  // synth-data
  Common synth_c;
  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth-data", "Generate a procedural phantom dataset");
  add_common(synth_cmd, synth_c, "Dataset directory", true);
  synth_cmd->add_option("--n", synth.n, "Number of samples")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--image-size", synth.image_size)->check(CLI::Range(16, 512));
  synth_cmd->add_option("--artifact-rate", synth.artifact_rate)->check(CLI::Range(0.0, 1.0));

  // ingest
  Common ingest_c;
  std::string busi_dir;
  int ingest_size = 64;
  auto* ingest_cmd = app.add_subcommand("ingest", "Import a BUSI-layout directory");
  add_common(ingest_cmd, ingest_c, "Dataset directory", true);
  ingest_cmd->add_option("busi_dir", busi_dir, "Directory with normal/ benign/ malignant/")->required();
  ingest_cmd->add_option("--image-size", ingest_size)->check(CLI::Range(16, 512));

  // train
  Common train_c;
  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train one stage: codec | diffusion | control | classifier");
  add_common(train_cmd, train_c, "Output checkpoint", false);
  train_cmd->add_option("stage", ta.stage)->required()->check(
      CLI::IsMember({"codec", "diffusion", "control", "classifier"}));
  train_cmd->add_option("--dataset", ta.dataset, "Dataset directory");
  train_cmd->add_option("--parent", ta.parent, "Parent checkpoint");
  train_cmd->add_option("--resume", ta.resume, "Checkpoint to continue");
  train_cmd->add_option("--log", ta.log, "JSONL log path");
  train_cmd->add_option("--split", ta.split, "Split to train on");
  train_cmd->add_option("--steps", ta.steps, "Total optimizer steps")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--batch-size", ta.batch_size)->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", ta.lr)->check(CLI::PositiveNumber);
  train_cmd->add_option("--condition-dropout", ta.condition_dropout)->check(CLI::Range(0.0, 1.0));

  // generate
  Common gen_c;
  GenerateArgs ga;
  auto* gen_cmd = app.add_subcommand("generate", "Sample images from a diffusion or control checkpoint");
  add_common(gen_cmd, gen_c, "Output directory", true);
  gen_cmd->add_option("--diffusion", ga.diffusion, "Diffusion checkpoint");
  gen_cmd->add_option("--control", ga.control, "Control checkpoint (needed with --mask)");
  auto* prompt_opt = gen_cmd->add_option("--prompt", ga.prompt, "e.g. \"Ultrasound image of a benign breast\"");
  auto* class_opt = gen_cmd->add_option("--class", ga.class_id, "0 normal, 1 benign, 2 malignant");
  prompt_opt->excludes(class_opt);
  gen_cmd->add_option("--mask", ga.mask, "Binary mask PNG")->check(CLI::ExistingFile);
  gen_cmd->add_option("--count", ga.count);
  gen_cmd->add_option("--steps", ga.steps);
  gen_cmd->add_option("--guidance", ga.guidance);
  gen_cmd->add_option("--eta", ga.eta);
  gen_cmd->add_option("--sampler", ga.sampler);

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Run an evaluation experiment");
  eval_cmd->require_subcommand(1);
  Common aug_c, cov_c, miou_c;
  EvalArgs aug_a, cov_a, miou_a;
  auto* aug_cmd = eval_cmd->add_subcommand("augment", "Baseline vs generated-augmented classifier");
  add_common(aug_cmd, aug_c, "Report JSON", true);
  aug_cmd->add_option("--dataset", aug_a.dataset)->required();
  aug_cmd->add_option("--diffusion", aug_a.diffusion)->required();
  aug_cmd->add_option("--per-class", aug_a.per_class);
  aug_cmd->add_option("--sample-steps", aug_a.sample_steps);
  aug_cmd->add_option("--guidance", aug_a.guidance);
  aug_cmd->add_option("--classifier-steps", aug_a.classifier_steps);

  auto* cov_cmd = eval_cmd->add_subcommand("coverage", "Classifier trained on generated data only");
  add_common(cov_cmd, cov_c, "Report JSON", true);
  cov_cmd->add_option("--dataset", cov_a.dataset)->required();
  cov_cmd->add_option("--codec", cov_a.codec)->required();
  cov_cmd->add_option("--fraction", cov_a.fraction);
  cov_cmd->add_option("--diffusion-steps", cov_a.diffusion_steps);
  cov_cmd->add_option("--batch-size", cov_a.batch_size);
  cov_cmd->add_option("--lr", cov_a.lr);
  cov_cmd->add_option("--per-class", cov_a.per_class);
  cov_cmd->add_option("--sample-steps", cov_a.sample_steps);
  cov_cmd->add_option("--guidance", cov_a.guidance);
  cov_cmd->add_option("--classifier-steps", cov_a.classifier_steps);
  cov_cmd->add_option("--permutations", cov_a.permutations);

  auto* miou_cmd = eval_cmd->add_subcommand("mask-iou", "Mask adherence of a control checkpoint");
  add_common(miou_cmd, miou_c, "Report JSON", true);
  miou_cmd->add_option("--dataset", miou_a.dataset)->required();
  miou_cmd->add_option("--control", miou_a.control)->required();
  miou_cmd->add_option("--count", miou_a.count, "Held-out lesion masks");
  miou_cmd->add_option("--sample-steps", miou_a.sample_steps);
  miou_cmd->add_option("--guidance", miou_a.guidance);

  // verify
  Common ver_c;
  std::vector<std::string> ver_ckpts;
  int grad_seeds = 20;
  bool skip_suite = false;
  auto* ver_cmd = app.add_subcommand("verify", "Run the invariant suite and check checkpoint files");
  add_common(ver_cmd, ver_c, "Report JSON", false);
  ver_cmd->add_option("--checkpoint", ver_ckpts, "Checkpoint files to validate");
  ver_cmd->add_option("--grad-seeds", grad_seeds)->check(CLI::PositiveNumber);
  ver_cmd->add_flag("--checkpoints-only", skip_suite, "Skip the invariant suite");

  // serve
  Common serve_c;
  service::ServerConfig sc;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP generation service");
  add_common(serve_cmd, serve_c, "Unused", false);
  serve_cmd->add_option("--diffusion", sc.diffusion_ckpt, "Diffusion checkpoint (env USDIFF_DIFFUSION_CKPT)");
  serve_cmd->add_option("--control", sc.control_ckpt, "Control checkpoint (env USDIFF_CONTROL_CKPT)");
  serve_cmd->add_option("--host", sc.host);
  serve_cmd->add_option("--port", sc.port)->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--max-concurrent", sc.max_concurrent)->check(CLI::Range(1, 64));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    fail("usage", e.what());
    std::cerr << app.help();
    return 2;
  }
  if (threads > 0) omp_set_num_threads(threads);

  try {
    const std::pair<CLI::App*, Common*> cmds[] = {{synth_cmd, &synth_c}, {ingest_cmd, &ingest_c}, {gen_cmd, &gen_c},
                                                  {aug_cmd, &aug_c},     {cov_cmd, &cov_c},       {miou_cmd, &miou_c},
                                                  {ver_cmd, &ver_c},     {serve_cmd, &serve_c}};
    for (auto [cmd, common] : cmds) {
      if (cmd->parsed()) load_config(cmd, *common);
    }
    if (*synth_cmd) return cmd_synth(synth_c, synth);
    if (*ingest_cmd) return cmd_ingest(ingest_c, busi_dir, ingest_size);
    if (*train_cmd) return cmd_train(train_cmd, train_c, ta);
    if (*gen_cmd) {
      if (ga.prompt.empty() && ga.class_id < 0) throw UsageError("generate: --prompt or --class is required");
      if (ga.diffusion.empty() && ga.control.empty()) throw UsageError("generate: --diffusion or --control is required");
      return cmd_generate(gen_c, ga, gen_c.seed_opt->count() > 0);
    }
    if (*aug_cmd) return cmd_eval_augment(aug_c, aug_a);
    if (*cov_cmd) return cmd_eval_coverage(cov_c, cov_a);
    if (*miou_cmd) return cmd_eval_mask(miou_c, miou_a);
    if (*ver_cmd) return cmd_verify(ver_c, ver_ckpts, grad_seeds, skip_suite);
    if (*serve_cmd) return cmd_serve(serve_c, sc);
  } catch (const UsageError& e) {
    fail("usage", e.what());
    return 2;
  } catch (const CLI::ParseError& e) {
    fail("usage", e.what());
    return 2;
  } catch (const service::RequestError& e) {
    fail("request", e.what());
    return 2;
  } catch (const train::DependencyError& e) {
    fail("dependency", e.what());
    return 1;
  } catch (const train::CheckpointError& e) {
    fail("checkpoint", e.what());
    return 1;
  } catch (const eval::LeakageError& e) {
    fail("leakage", e.what());
    return 1;
  } catch (const train::TrainingError& e) {
    fail("training", e.what());
    return 1;
  } catch (const std::exception& e) {
    fail("error", e.what());
    return 1;
  }
  return 0;
}
