#include "diffadapt/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "diffadapt/evaluation.hpp"
#include "diffadapt/io.hpp"
#include "diffadapt/json_io.hpp"
#include "diffadapt/labeling.hpp"
#include "diffadapt/parallel.hpp"
#include "diffadapt/probe.hpp"
#include "diffadapt/service.hpp"
#include "diffadapt/strategy.hpp"
#include "diffadapt/uncertainty.hpp"
#include "diffadapt/verification.hpp"

namespace diffadapt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

BackendSpec parse_backend_spec(const std::string& text) {
  BackendSpec spec;
  if (text == "sim" || text.rfind("sim:", 0) == 0) {
    spec.simulated = true;
    spec.profile = text.size() > 4 ? text.substr(4) : "default";
    if (spec.profile.empty()) spec.profile = "default";
    return spec;
  }
  if (text.rfind("http://", 0) == 0 || text.rfind("https://", 0) == 0) {
    spec.url = text;
    return spec;
  }
  throw ValidationError("--backend must be 'sim[:PROFILE]' or an http(s) URL, got '" + text + "'");
}

namespace {

// --- option holders -------------------------------------------------------

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = "out";
  std::string backend = "sim:default";
  int jobs = 0;
  std::string log_level = "warn";
};

struct BackendOpts {
  std::string model;
  std::string provider = "auto";
  std::string features;
  std::string tail_mode = "tail_bucket";
  std::string embedding_model;
  int timeout = 600;
  bool no_reasoning_block = false;
};

struct CurveOpts {
  std::string problems;
  int per_rating = 300;
  int n = 10;
  int max_tokens = 32768;
  double temperature = 0.6;
  int top_k = 20;
  std::string easy = "1,2";
  std::string medium = "4,5,6";
  bool no_records = false;
};

struct SynthOpts {
  int per_rating = 30;
  std::string counts;
  int total = 0;
  std::string weights;
  std::string prefix = "sim";
  std::string benchmark = "sim";
  std::string split = "train";
  std::string file = "problems.jsonl";
};

struct GenerateOpts {
  std::string problems;
  int n = 10;
  double temperature = 0.6;
  int max_tokens = 32768;
  int top_k = 20;
  std::string thresholds;
};

struct TrainOpts {
  std::string data;
  std::string features;
  int epochs = 100;
  double lr = 1e-3;
  double weight_decay = 0.01;
  int batch_size = 64;
  std::size_t hidden = 128;
  std::string provider_fingerprint;
};

struct RouteOpts {
  std::string probe;
  std::string question;
  std::string problems;
  std::string id;
  std::string gold;
  std::string benchmark;
  int rating = 0;
  std::string budgets;
  double budget_scale = 1.0;
  int top_k = 20;
  bool ignore_fingerprint = false;
};

struct ServeOpts {
  std::string listen = "127.0.0.1:8080";
};

struct EvalOpts {
  std::string problems;
  std::string strategy = "all";
  std::string budgets;
  double budget_scale = 1.0;
  int top_k = 0;
  std::vector<std::string> benchmarks;
};

struct ReportOpts {
  std::string outcomes;
  std::string method;
  std::string problems;
};

struct Options {
  Globals g;
  BackendOpts b;
  CurveOpts curve;
  SynthOpts synth;
  GenerateOpts gen;
  TrainOpts train;
  RouteOpts route;
  ServeOpts serve;
  EvalOpts eval;
  ReportOpts report;
};

void add_globals(CLI::App* sub, Globals& g) {
  sub->add_option("--config", g.config, "JSON config file (keys are long flag names)");
  sub->add_option("--seed", g.seed, "Run seed")->capture_default_str();
  sub->add_option("--out", g.out, "Output directory")->capture_default_str();
  sub->add_option("--backend", g.backend, "Completion backend: URL or sim:PROFILE")
      ->capture_default_str();
  sub->add_option("--jobs", g.jobs, "Parallel work items (0: all cores)")->capture_default_str();
  sub->add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off")
      ->capture_default_str();
}

void add_backend_opts(CLI::App* sub, BackendOpts& b) {
  sub->add_option("--model", b.model, "Model name (budgets, thresholds, API requests)");
  sub->add_option("--provider", b.provider,
                  "Representation provider: auto|sim|feature-file|embeddings|disabled")
      ->capture_default_str();
  sub->add_option("--features", b.features, "Feature file for the feature-file provider");
  sub->add_option("--tail-mode", b.tail_mode, "Top-k entropy tail handling: tail_bucket|renormalize")
      ->capture_default_str();
  sub->add_option("--embedding-model", b.embedding_model, "Model for the embeddings provider");
  sub->add_option("--timeout", b.timeout, "Live backend read timeout in seconds")
      ->capture_default_str();
  sub->add_flag("--no-reasoning-block", b.no_reasoning_block,
                "Prepend strategy prefixes without a <think> block");
}

// --- environment ----------------------------------------------------------

struct Env {
  BackendSpec spec;
  std::shared_ptr<const SimProfile> profile;
  std::shared_ptr<OpenAIBackend> live;
  std::shared_ptr<CompletionBackend> backend;
  std::shared_ptr<RepresentationProvider> provider;
  std::optional<std::size_t> provider_dim;
  std::string model;
  json inputs = json::object();
};

Env make_env(const Globals& g, const BackendOpts& b, bool need_provider) {
  Env env;
  env.spec = parse_backend_spec(g.backend);
  env.model = b.model;
  if (env.spec.simulated) {
    env.profile = std::make_shared<const SimProfile>(SimProfile::resolve(env.spec.profile));
    env.backend = std::make_shared<SimBackend>(env.profile, g.seed);
    if (env.model.empty()) env.model = "sim";
    if (env.spec.profile != "default") env.inputs["profile"] = io::file_fingerprint(env.spec.profile);
  } else {
    OpenAIConfig config;
    config.base_url = env.spec.url;
    config.model = b.model;
    config.embedding_model = b.embedding_model;
    config.tail_mode = parse_tail_mode(b.tail_mode);
    config.reasoning_block = !b.no_reasoning_block;
    config.timeout = std::chrono::seconds(b.timeout);
    config.max_in_flight = resolve_jobs(g.jobs);
    env.live = std::make_shared<OpenAIBackend>(config);
    env.backend = env.live;
  }
  if (!need_provider) return env;

  std::string kind = b.provider;
  if (kind == "auto") {
    if (!b.features.empty()) {
      kind = "feature-file";
    } else {
      kind = env.spec.simulated ? "sim" : "embeddings";
    }
  }
  if (kind == "sim") {
    if (!env.profile) throw ValidationError("--provider sim needs a simulated backend");
    env.provider = std::make_shared<SimRepresentation>(env.profile, g.seed);
    env.provider_dim = env.profile->feature_dim();
  } else if (kind == "feature-file") {
    if (b.features.empty()) throw ValidationError("--provider feature-file needs --features FILE");
    auto file_provider = FeatureFileProvider::open(b.features);
    env.provider_dim = file_provider->file().dim();
    env.provider = std::move(file_provider);
    env.inputs["features"] = io::file_fingerprint(b.features);
  } else if (kind == "embeddings") {
    if (!env.live) throw ValidationError("--provider embeddings needs a live backend URL");
    env.provider = std::make_shared<EmbeddingsProvider>(env.live);
  } else if (kind == "disabled") {
    env.provider = std::make_shared<DisabledProvider>();
  } else {
    throw ValidationError("unknown --provider '" + kind + "'");
  }
  return env;
}

BudgetTable load_budgets(const std::string& path, json& inputs) {
  if (path.empty()) return BudgetTable::builtin();
  inputs["budgets"] = io::file_fingerprint(path);
  return BudgetTable::load(path);
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      out.push_back(std::stoi(part));
    } catch (const std::exception&) {
      throw ValidationError(std::string(what) + ": '" + part + "' is not an integer");
    }
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      out.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw ValidationError(std::string(what) + ": '" + part + "' is not a number");
    }
  }
  return out;
}

// Resolved option values, for the manifest.
json snapshot(const CLI::App* sub) {
  json config = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config" || name == "out" || name.empty()) continue;
    if (opt->get_expected_min() == 0) {
      config[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto& r = opt->results();
      config[name] = r.size() == 1 ? json(r.front()) : json(r);
    } else {
      config[name] = opt->get_default_str();
    }
  }
  return config;
}

void write_manifest(const Globals& g, const CLI::App* sub, json inputs, json extra) {
  json manifest{{"command", sub->get_name()},
                {"version", DIFFADAPT_VERSION},
                {"created", io::utc_timestamp()},
                {"seed", g.seed},
                {"config", snapshot(sub)},
                {"inputs", std::move(inputs)}};
  for (auto& [key, value] : extra.items()) manifest[key] = value;
  io::write_file(fs::path(g.out) / kManifestFile, manifest.dump(2) + "\n");
}

fs::path out_path(const Globals& g, const char* dir, const std::string& file) {
  return fs::path(g.out) / dir / file;
}

template <typename T>
void write_lines(const fs::path& path, const std::vector<T>& items) {
  io::write_jsonl<T>(path, std::span<const T>(items));
}

std::vector<StrategyId> parse_strategies(const std::string& text) {
  if (text == "all") return {StrategyId::kEasy, StrategyId::kNormal, StrategyId::kHard};
  return {parse_difficulty(text)};
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// --- subcommands ----------------------------------------------------------

int cmd_synth(Options& o, const CLI::App* sub) {
  std::vector<int> counts;
  if (!o.synth.counts.empty()) {
    counts = parse_int_list(o.synth.counts, "--counts");
  } else if (o.synth.total > 0) {
    if (o.synth.weights.empty()) throw ValidationError("--total needs --weights w1,...,w10");
    const auto weights = parse_double_list(o.synth.weights, "--weights");
    counts = allocate_counts(weights, o.synth.total);
  } else {
    counts.assign(10, o.synth.per_rating);
  }
  for (int c : counts) {
    if (c < 0) throw ValidationError("problem counts must be >= 0");
  }
  const auto problems = synthetic_problems(counts, o.g.seed, o.synth.prefix, o.synth.benchmark,
                                           o.synth.split);
  const fs::path path = fs::path(o.g.out) / o.synth.file;
  io::save_problems(path, problems);
  write_manifest(o.g, sub, json::object(),
                 json{{"problems", problems.size()}, {"counts_per_rating", counts},
                      {"outputs", {o.synth.file}}});
  std::cout << "wrote " << problems.size() << " problems to " << path.string() << "\n";
  return kOk;
}

int cmd_curve(Options& o, const CLI::App* sub) {
  Env env = make_env(o.g, o.b, false);
  std::vector<Problem> problems;
  if (!o.curve.problems.empty()) {
    problems = io::load_problems(o.curve.problems);
    env.inputs["problems"] = io::file_fingerprint(o.curve.problems);
  } else {
    if (!env.profile) throw ValidationError("simulate-curve on a live backend needs --problems");
    if (o.curve.per_rating < 1) throw ValidationError("--per-rating must be >= 1");
    std::vector<int> counts;
    const int max_rating = env.profile->ratings().rbegin()->first;
    for (int r = 1; r <= max_rating; ++r) {
      counts.push_back(env.profile->ratings().count(r) ? o.curve.per_rating : 0);
    }
    problems = synthetic_problems(counts, o.g.seed, "curve", "sim", "train");
  }
  if (o.curve.n < 1) throw ValidationError("--n must be >= 1");

  const std::size_t n = static_cast<std::size_t>(o.curve.n);
  std::vector<std::optional<GenerationRecord>> slots(problems.size() * n);
  std::atomic<std::size_t> failures{0};
  parallel_for(slots.size(), o.g.jobs, [&](std::size_t k) {
    const Problem& p = problems[k / n];
    CompletionRequest request;
    request.temperature = o.curve.temperature;
    request.max_tokens = o.curve.max_tokens;
    request.logprobs_top_k = o.curve.top_k;
    request.seed = o.g.seed;
    request.sample_index = static_cast<int>(k % n);
    try {
      GenerationRecord r = env.backend->complete(p, request);
      slots[k] = r.with_verdict(verdict(r, p));
    } catch (const std::exception& e) {
      ++failures;
      spdlog::warn("sample {} of '{}' failed: {}", k % n, p.id(), e.what());
    }
  });
  std::vector<GenerationRecord> records;
  records.reserve(slots.size());
  for (auto& s : slots) {
    if (s) records.push_back(std::move(*s));
  }
  const DifficultyCurve curve = difficulty_curve(records, problems);
  io::write_file(out_path(o.g, kReportsDir, "curve.csv"), curve_to_csv(curve));
  json outputs = json::array({std::string(kReportsDir) + "/curve.csv"});
  if (!o.curve.no_records) {
    write_lines(out_path(o.g, kRecordsDir, "curve.jsonl"), records);
    outputs.push_back(std::string(kRecordsDir) + "/curve.jsonl");
  }

  const auto easy = parse_int_list(o.curve.easy, "--easy");
  const auto medium = parse_int_list(o.curve.medium, "--medium");
  json summary{{"problems", problems.size()},
               {"records", records.size()},
               {"failed_samples", failures.load()},
               {"skipped", curve.skipped}};
  json rows = json::array();
  for (const auto& row : curve.rows) {
    json r{{"rating", row.rating},
           {"count", row.count},
           {"mean_correctness", row.mean_correctness},
           {"correctness_se", row.correctness_se},
           {"mean_entropy", row.mean_entropy},
           {"entropy_se", row.entropy_se}};
    if (env.profile && env.profile->ratings().count(row.rating)) {
      const auto& p = env.profile->at(row.rating);
      r["profile_entropy"] = p.mean_entropy;
      r["profile_accuracy"] = p.accuracy[class_index(StrategyId::kNormal)];
      if (row.entropy_se > 0.0) r["entropy_z"] = (row.mean_entropy - p.mean_entropy) / row.entropy_se;
    }
    rows.push_back(std::move(r));
  }
  summary["curve"] = std::move(rows);
  try {
    const double reduction = entropy_reduction(curve, easy, medium);
    summary["entropy_reduction"] = reduction;
    std::cout << "easy->medium entropy reduction: " << reduction * 100.0 << "%\n";
  } catch (const DomainError& e) {
    spdlog::warn("entropy reduction unavailable: {}", e.what());
  }
  summary["outputs"] = std::move(outputs);
  write_manifest(o.g, sub, env.inputs, summary);
  std::cout << curve_to_csv(curve);
  return kOk;
}

int cmd_generate(Options& o, const CLI::App* sub) {
  Env env = make_env(o.g, o.b, true);
  const auto problems = io::load_problems(o.gen.problems);
  env.inputs["problems"] = io::file_fingerprint(o.gen.problems);
  const Thresholds thresholds =
      o.gen.thresholds.empty() ? default_thresholds(env.model) : parse_thresholds(o.gen.thresholds);
  SamplingConfig config;
  config.n = o.gen.n;
  config.temperature = o.gen.temperature;
  config.max_tokens = o.gen.max_tokens;
  config.top_k_logprobs = o.gen.top_k;
  config.seed = o.g.seed;
  config.jobs = o.g.jobs;
  DatasetResult result = generate_dataset(problems, *env.backend, *env.provider, config, thresholds);

  write_lines(out_path(o.g, kRecordsDir, "stage1.jsonl"), result.records);
  save_labeled_dataset(out_path(o.g, kFeaturesDir, "dataset.jsonl"), result.examples);
  json outputs = json::array({std::string(kRecordsDir) + "/stage1.jsonl",
                              std::string(kFeaturesDir) + "/dataset.jsonl"});
  if (!result.examples.empty()) {
    features_of(result.examples, json{{"fingerprint", env.provider->fingerprint()},
                                      {"provider", env.provider->fingerprint()}})
        .write(out_path(o.g, kFeaturesDir, "features.dffv"));
    outputs.push_back(std::string(kFeaturesDir) + "/features.dffv");
  }
  json extra = result.manifest;
  extra.erase("started");
  extra["model"] = env.model;
  extra["outputs"] = std::move(outputs);
  write_manifest(o.g, sub, env.inputs, extra);
  std::cout << "labeled " << result.examples.size() << " of " << problems.size()
            << " problems; distribution " << label_distribution(result.examples).dump() << "\n";
  return kOk;
}

std::string dataset_fingerprint(const fs::path& data) {
  const fs::path features = data.parent_path() / "features.dffv";
  if (fs::exists(features)) return FeatureFile::read(features).fingerprint();
  const fs::path manifest = data.parent_path().parent_path() / kManifestFile;
  if (fs::exists(manifest)) {
    const json j = json::parse(io::read_file(manifest));
    if (j.contains("provider_fingerprint") && j["provider_fingerprint"].is_string()) {
      return j["provider_fingerprint"].get<std::string>();
    }
  }
  return {};
}

int cmd_train(Options& o, const CLI::App* sub) {
  json inputs{{"data", io::file_fingerprint(o.train.data)}};
  std::optional<FeatureFile> features;
  if (!o.train.features.empty()) {
    features = FeatureFile::read(o.train.features);
    inputs["features"] = io::file_fingerprint(o.train.features);
  }
  const auto data = load_labeled_dataset(o.train.data, features ? &*features : nullptr);
  if (data.empty()) throw ValidationError(o.train.data + " contains no labeled examples");
  TrainConfig config;
  config.epochs = o.train.epochs;
  config.learning_rate = o.train.lr;
  config.weight_decay = o.train.weight_decay;
  config.batch_size = o.train.batch_size;
  config.hidden_dim = o.train.hidden;
  config.seed = o.g.seed;
  const auto examples = training_examples(data);
  const TrainResult result = train(examples, config);

  std::string fingerprint = o.train.provider_fingerprint;
  if (fingerprint.empty()) {
    fingerprint = features ? features->fingerprint() : dataset_fingerprint(o.train.data);
  }
  save_probe(result.params, out_path(o.g, kProbesDir, "probe.bin"), fingerprint,
             json{{"train_config", config.to_json()}});
  std::ostringstream log;
  log.precision(17);
  log << "epoch,loss\n";
  for (std::size_t i = 0; i < result.epoch_loss.size(); ++i) {
    log << i + 1 << ',' << result.epoch_loss[i] << '\n';
  }
  io::write_file(out_path(o.g, kReportsDir, "train_log.csv"), log.str());
  write_manifest(o.g, sub, inputs,
                 json{{"examples", data.size()},
                      {"label_distribution", label_distribution(data)},
                      {"train_config", config.to_json()},
                      {"initial_loss", result.initial_loss},
                      {"final_loss", result.final_loss},
                      {"train_accuracy", result.train_accuracy},
                      {"warnings", result.warnings},
                      {"provider_fingerprint", fingerprint},
                      {"probe_fingerprint", probe_fingerprint(result.params)},
                      {"outputs", {std::string(kProbesDir) + "/probe.bin",
                                   std::string(kReportsDir) + "/train_log.csv"}}});
  std::cout << "trained on " << data.size() << " examples: loss " << result.initial_loss << " -> "
            << result.final_loss << ", train accuracy " << result.train_accuracy << "\n";
  return kOk;
}

std::shared_ptr<Router> make_router(const Options& o, const RouteOpts& r, Env& env,
                                    std::string* probe_fp) {
  ProbeExpectations expect;
  expect.input_dim = env.provider_dim;
  if (!r.ignore_fingerprint) expect.provider_fingerprint = env.provider->fingerprint();
  ProbeFile probe = load_probe(r.probe, expect);
  env.inputs["probe"] = io::file_fingerprint(r.probe);
  if (probe_fp) *probe_fp = probe_fingerprint(probe.params);
  auto budgets = std::make_shared<const BudgetTable>(load_budgets(r.budgets, env.inputs));
  RouterOptions options;
  options.model_name = env.model;
  options.budget_scale = r.budget_scale;
  options.logprobs_top_k = r.top_k;
  options.seed = o.g.seed;
  return std::make_shared<Router>(std::make_shared<const ProbeParameters>(std::move(probe.params)),
                                  env.backend, env.provider, std::move(budgets), options);
}

int cmd_route(Options& o, const CLI::App* sub) {
  if (o.route.question.empty() == o.route.problems.empty()) {
    throw ValidationError("route needs exactly one of --question and --problems");
  }
  Env env = make_env(o.g, o.b, true);
  auto router = make_router(o, o.route, env, nullptr);
  std::vector<Problem> problems;
  if (!o.route.problems.empty()) {
    problems = io::load_problems(o.route.problems);
    env.inputs["problems"] = io::file_fingerprint(o.route.problems);
  } else {
    std::string id = o.route.id.empty() ? "q-" + io::hex64(io::fnv1a64(o.route.question)) : o.route.id;
    problems.emplace_back(std::move(id), o.route.question, o.route.gold,
                          o.route.rating > 0 ? std::optional<int>(o.route.rating) : std::nullopt,
                          o.route.benchmark, "route");
  }
  const RoutedReport report = evaluate_routed(problems, *router, o.g.jobs);
  std::vector<json> lines;
  for (const auto& r : report.results) lines.push_back(r.to_json());
  write_lines(out_path(o.g, kRecordsDir, "routed.jsonl"), lines);
  write_lines(out_path(o.g, kReportsDir, "routed_outcomes.jsonl"), report.outcomes);
  io::write_file(out_path(o.g, kReportsDir, "routed.csv"), rows_to_csv(report.rows));
  json labels = json::object();
  for (const auto& [k, v] : report.label_counts) labels[k] = v;
  write_manifest(o.g, sub, env.inputs,
                 json{{"problems", problems.size()},
                      {"model", env.model},
                      {"fallbacks", report.fallbacks},
                      {"errors", report.errors},
                      {"label_counts", labels},
                      {"outputs", {std::string(kRecordsDir) + "/routed.jsonl",
                                   std::string(kReportsDir) + "/routed_outcomes.jsonl",
                                   std::string(kReportsDir) + "/routed.csv"}}});
  if (problems.size() == 1) {
    std::cout << report.results.front().to_json().dump(2) << "\n";
  } else {
    std::cout << rows_to_csv(report.rows);
  }
  return report.errors == 0 ? kOk : kFailure;
}

int cmd_serve(Options& o, const CLI::App*) {
  Env env = make_env(o.g, o.b, true);
  std::string fp;
  auto router = make_router(o, o.route, env, &fp);
  const auto colon = o.serve.listen.rfind(':');
  if (colon == std::string::npos) throw ValidationError("--listen must be HOST:PORT");
  const std::string host = o.serve.listen.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(o.serve.listen.substr(colon + 1));
  } catch (const std::exception&) {
    throw ValidationError("--listen port is not a number: " + o.serve.listen);
  }
  RouterService service(router, ServiceInfo{fp});
  const int bound = service.bind(host, port);
  std::cout << "serving on " << host << ":" << bound << std::endl;
  service.listen();
  return kOk;
}

int cmd_eval(Options& o, const CLI::App* sub, bool oracle) {
  Env env = make_env(o.g, o.b, false);
  const auto problems = io::load_problems(o.eval.problems);
  env.inputs["problems"] = io::file_fingerprint(o.eval.problems);
  const BudgetTable budgets = load_budgets(o.eval.budgets, env.inputs);
  EvalOptions options;
  options.model_name = env.model;
  options.budget_scale = o.eval.budget_scale;
  options.seed = o.g.seed;
  options.logprobs_top_k = o.eval.top_k;
  options.jobs = o.g.jobs;
  options.benchmarks = o.eval.benchmarks;

  const auto strategies =
      oracle ? parse_strategies("all") : parse_strategies(lower(o.eval.strategy));
  std::vector<StrategyOutcome> all_outcomes;
  std::vector<SummaryRow> all_rows;
  json notes = json::array();
  json outputs = json::array();
  for (StrategyId s : strategies) {
    const std::string name = lower(to_string(s));
    FixedReport report = evaluate_fixed(problems, *env.backend, s, budgets, options);
    write_lines(out_path(o.g, kRecordsDir, "fixed_" + name + ".jsonl"), report.records);
    outputs.push_back(std::string(kRecordsDir) + "/fixed_" + name + ".jsonl");
    if (!oracle) {
      write_lines(out_path(o.g, kReportsDir, "outcomes_" + name + ".jsonl"), report.outcomes);
      io::write_file(out_path(o.g, kReportsDir, "fixed_" + name + ".csv"), rows_to_csv(report.rows));
      outputs.push_back(std::string(kReportsDir) + "/outcomes_" + name + ".jsonl");
      outputs.push_back(std::string(kReportsDir) + "/fixed_" + name + ".csv");
    }
    for (const auto& n : report.notes) notes.push_back(std::string(to_string(s)) + ": " + n);
    all_outcomes.insert(all_outcomes.end(), report.outcomes.begin(), report.outcomes.end());
    all_rows.insert(all_rows.end(), report.rows.begin(), report.rows.end());
  }
  json extra{{"model", env.model}, {"problems", problems.size()}, {"notes", notes}};
  if (oracle) {
    const OracleReport report = oracle_report(all_outcomes, benchmark_index(problems));
    write_lines(out_path(o.g, kReportsDir, "outcomes.jsonl"), all_outcomes);
    io::write_file(out_path(o.g, kReportsDir, "oracle.csv"), report.to_csv());
    io::write_file(out_path(o.g, kReportsDir, "pareto.json"), report.pareto().dump(2) + "\n");
    for (const char* f : {"outcomes.jsonl", "oracle.csv", "pareto.json"}) {
      outputs.push_back(std::string(kReportsDir) + "/" + f);
    }
    extra["excluded"] = report.excluded;
    std::cout << report.to_csv();
  } else {
    std::cout << rows_to_csv(all_rows);
  }
  for (const auto& n : notes) std::cout << "note: " << n.get<std::string>() << "\n";
  extra["outputs"] = std::move(outputs);
  write_manifest(o.g, sub, env.inputs, extra);
  return kOk;
}

int cmd_report(Options& o, const CLI::App* sub) {
  json inputs{{"outcomes", io::file_fingerprint(o.report.outcomes)}};
  const auto outcomes = io::read_jsonl<StrategyOutcome>(o.report.outcomes);
  std::map<std::string, std::string> bench;
  if (!o.report.problems.empty()) {
    bench = benchmark_index(io::load_problems(o.report.problems));
    inputs["problems"] = io::file_fingerprint(o.report.problems);
  }
  const OracleReport report = oracle_report(outcomes, bench);
  io::write_file(out_path(o.g, kReportsDir, "oracle.csv"), report.to_csv());
  io::write_file(out_path(o.g, kReportsDir, "pareto.json"), report.pareto().dump(2) + "\n");
  json extra{{"excluded", report.excluded},
             {"outputs", {std::string(kReportsDir) + "/oracle.csv",
                          std::string(kReportsDir) + "/pareto.json"}}};
  std::cout << report.to_csv();
  if (!o.report.method.empty()) {
    inputs["method"] = io::file_fingerprint(o.report.method);
    const auto method = io::read_jsonl<StrategyOutcome>(o.report.method);
    std::vector<StrategyOutcome> normal;
    for (const auto& x : outcomes) {
      if (x.strategy_id() == StrategyId::kNormal) normal.push_back(x);
    }
    const auto pairs = token_pairs(normal, method, bench);
    const double savings = token_savings(pairs);
    const auto method_rows = summarize("Method", method, bench);
    const auto normal_rows = summarize("Normal", normal, bench);
    json per_benchmark = json::object();
    for (const auto& [b, p] : pairs) per_benchmark[b] = {{"normal_tokens", p.first}, {"method_tokens", p.second}};
    json savings_json{{"token_savings_percent", savings},
                      {"per_benchmark", per_benchmark},
                      {"method_accuracy", method_rows.back().accuracy},
                      {"normal_accuracy", normal_rows.back().accuracy}};
    io::write_file(out_path(o.g, kReportsDir, "savings.json"), savings_json.dump(2) + "\n");
    extra["outputs"].push_back(std::string(kReportsDir) + "/savings.json");
    extra["token_savings_percent"] = savings;
    std::cout << "token savings vs Normal: " << savings << "%\n";
  }
  write_manifest(o.g, sub, inputs, extra);
  return kOk;
}

// --- config file ----------------------------------------------------------

bool given_on_command_line(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
    return a == flag || a.rfind(flag + "=", 0) == 0;
  });
}

std::optional<std::string> config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

// Appends config values as flags; returns the offending keys.
std::vector<std::string> apply_config(CLI::App* sub, const json& config, std::vector<std::string>& args) {
  std::vector<std::string> unknown;
  std::vector<std::string> extra;
  for (const auto& [raw_key, value] : config.items()) {
    std::string key = raw_key;
    std::replace(key.begin(), key.end(), '_', '-');
    const std::string flag = "--" + key;
    CLI::Option* opt = sub->get_option_no_throw(flag);
    if (opt == nullptr || key == "config" || key == "help") {
      unknown.push_back(raw_key);
      continue;
    }
    if (value.is_object()) {
      unknown.push_back(raw_key + " (nested objects are not supported)");
      continue;
    }
    if (given_on_command_line(args, flag)) continue;
    if (opt->get_expected_min() == 0) {
      if (!value.is_boolean()) {
        unknown.push_back(raw_key + " (expected true/false)");
        continue;
      }
      if (value.get<bool>()) extra.push_back(flag);
      continue;
    }
    if (value.is_array()) {
      for (const auto& item : value) {
        extra.push_back(flag);
        extra.push_back(scalar_text(item));
      }
      continue;
    }
    extra.push_back(flag);
    extra.push_back(scalar_text(value));
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return unknown;
}

}  // namespace

int run_command(const std::vector<std::string>& input_args) {
  Options o;
  CLI::App app{"Difficulty-adaptive inference router", "diffadapt"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(DIFFADAPT_VERSION));

  auto* synth = app.add_subcommand("synth-problems", "Write synthetic problems with difficulty ratings");
  add_globals(synth, o.g);
  synth->add_option("--per-rating", o.synth.per_rating, "Problems per rating 1..10")->capture_default_str();
  synth->add_option("--counts", o.synth.counts, "Comma-separated counts for ratings 1..k");
  synth->add_option("--total", o.synth.total, "Total problems split by --weights");
  synth->add_option("--weights", o.synth.weights, "Comma-separated rating weights");
  synth->add_option("--prefix", o.synth.prefix, "Problem id prefix")->capture_default_str();
  synth->add_option("--benchmark", o.synth.benchmark, "Benchmark tag")->capture_default_str();
  synth->add_option("--split", o.synth.split, "Split tag")->capture_default_str();
  synth->add_option("--file", o.synth.file, "Output file name inside --out")->capture_default_str();

  auto* curve = app.add_subcommand("simulate-curve", "Entropy and correctness by difficulty rating");
  add_globals(curve, o.g);
  add_backend_opts(curve, o.b);
  curve->add_option("--problems", o.curve.problems, "Problems JSONL (default: synthetic)");
  curve->add_option("--per-rating", o.curve.per_rating, "Synthetic problems per rating")->capture_default_str();
  curve->add_option("--n", o.curve.n, "Samples per problem")->capture_default_str();
  curve->add_option("--max-tokens", o.curve.max_tokens, "Max tokens per sample")->capture_default_str();
  curve->add_option("--temperature", o.curve.temperature, "Sampling temperature")->capture_default_str();
  curve->add_option("--top-k", o.curve.top_k, "Top logprobs per token")->capture_default_str();
  curve->add_option("--easy", o.curve.easy, "Ratings of the easy group")->capture_default_str();
  curve->add_option("--medium", o.curve.medium, "Ratings of the medium group")->capture_default_str();
  curve->add_flag("--no-records", o.curve.no_records, "Do not write the sampled records");

  auto* gen = app.add_subcommand("generate", "Stage 1: sample, score and label training problems");
  add_globals(gen, o.g);
  add_backend_opts(gen, o.b);
  gen->add_option("--problems", o.gen.problems, "Problems JSONL")->required()->check(CLI::ExistingFile);
  gen->add_option("--n", o.gen.n, "Samples per problem")->capture_default_str();
  gen->add_option("--temperature", o.gen.temperature, "Sampling temperature")->capture_default_str();
  gen->add_option("--max-tokens", o.gen.max_tokens, "Max tokens per sample")->capture_default_str();
  gen->add_option("--top-k", o.gen.top_k, "Top logprobs per token")->capture_default_str();
  gen->add_option("--thresholds", o.gen.thresholds, "alpha,beta,gamma (default: per --model)");

  auto* tr = app.add_subcommand("train", "Stage 2: train the difficulty probe");
  add_globals(tr, o.g);
  tr->add_option("--data", o.train.data, "Labeled dataset JSONL")->required()->check(CLI::ExistingFile);
  tr->add_option("--features", o.train.features, "Feature file for by-reference datasets");
  tr->add_option("--epochs", o.train.epochs, "Training epochs")->capture_default_str();
  tr->add_option("--lr", o.train.lr, "AdamW learning rate")->capture_default_str();
  tr->add_option("--weight-decay", o.train.weight_decay, "AdamW weight decay")->capture_default_str();
  tr->add_option("--batch-size", o.train.batch_size, "Minibatch size")->capture_default_str();
  tr->add_option("--hidden", o.train.hidden, "Hidden width")->capture_default_str();
  tr->add_option("--provider-fingerprint", o.train.provider_fingerprint,
                 "Feature provider recorded in the probe (default: from the dataset)");

  auto add_route_opts = [&](CLI::App* sub) {
    sub->add_option("--probe", o.route.probe, "Probe file")->required()->check(CLI::ExistingFile);
    sub->add_option("--budgets", o.route.budgets, "Budget table JSON (default: built-in)");
    sub->add_option("--budget-scale", o.route.budget_scale, "Multiplier on |Max|")->capture_default_str();
    sub->add_option("--top-k", o.route.top_k, "Top logprobs per token")->capture_default_str();
    sub->add_flag("--ignore-fingerprint", o.route.ignore_fingerprint,
                  "Accept a probe trained on another feature provider");
  };
  auto* route = app.add_subcommand("route", "Route one question or a problem file");
  add_globals(route, o.g);
  add_backend_opts(route, o.b);
  add_route_opts(route);
  route->add_option("--question", o.route.question, "Question text");
  route->add_option("--problems", o.route.problems, "Problems JSONL");
  route->add_option("--id", o.route.id, "Problem id for --question");
  route->add_option("--gold", o.route.gold, "Gold answer for --question");
  route->add_option("--benchmark", o.route.benchmark, "Benchmark for --question");
  route->add_option("--rating", o.route.rating, "Difficulty rating for --question (simulator)");

  auto* serve = app.add_subcommand("serve", "Stage 3: HTTP routing proxy");
  add_globals(serve, o.g);
  add_backend_opts(serve, o.b);
  add_route_opts(serve);
  serve->add_option("--listen", o.serve.listen, "HOST:PORT")->capture_default_str();

  auto add_eval_opts = [&](CLI::App* sub) {
    sub->add_option("--problems", o.eval.problems, "Problems JSONL")->required()->check(CLI::ExistingFile);
    sub->add_option("--budgets", o.eval.budgets, "Budget table JSON (default: built-in)");
    sub->add_option("--budget-scale", o.eval.budget_scale, "Multiplier on |Max|")->capture_default_str();
    sub->add_option("--top-k", o.eval.top_k, "Top logprobs per token")->capture_default_str();
    sub->add_option("--benchmarks", o.eval.benchmarks, "Expected benchmarks")->delimiter(',');
  };
  auto* fixed = app.add_subcommand("eval-fixed", "Fixed-strategy baselines");
  add_globals(fixed, o.g);
  add_backend_opts(fixed, o.b);
  add_eval_opts(fixed);
  fixed->add_option("--strategy", o.eval.strategy, "easy|normal|hard|all")->capture_default_str();

  auto* oracle = app.add_subcommand("eval-oracle", "All three strategies plus the oracle");
  add_globals(oracle, o.g);
  add_backend_opts(oracle, o.b);
  add_eval_opts(oracle);

  auto* report = app.add_subcommand("report", "Oracle table, Pareto data and token savings");
  add_globals(report, o.g);
  report->add_option("--outcomes", o.report.outcomes, "Strategy outcomes JSONL (all three strategies)")
      ->required()
      ->check(CLI::ExistingFile);
  report->add_option("--method", o.report.method, "Method outcomes JSONL (e.g. routed)")
      ->check(CLI::ExistingFile);
  report->add_option("--problems", o.report.problems, "Problems JSONL for benchmark tags")
      ->check(CLI::ExistingFile);

  std::vector<std::string> args = input_args;
  try {
    if (const auto path = config_path(args)) {
      CLI::App* target = nullptr;
      for (const auto& a : args) {
        target = app.get_subcommand_no_throw(a);
        if (target != nullptr) break;
      }
      if (target == nullptr) throw ValidationError("--config needs a subcommand");
      json config;
      try {
        config = json::parse(io::read_file(*path));
      } catch (const json::parse_error& e) {
        throw ValidationError("config file " + *path + " is not valid JSON: " + e.what());
      }
      if (!config.is_object()) throw ValidationError("config file " + *path + " must hold a JSON object");
      const auto unknown = apply_config(target, config, args);
      if (!unknown.empty()) {
        std::string list;
        for (const auto& k : unknown) list += (list.empty() ? "" : ", ") + k;
        throw ValidationError("config file " + *path + ": unknown or invalid key(s) for '" +
                              target->get_name() + "': " + list);
      }
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  const auto level = spdlog::level::from_str(o.g.log_level);
  spdlog::set_level(level);

  try {
    if (*synth) return cmd_synth(o, synth);
    if (*curve) return cmd_curve(o, curve);
    if (*gen) return cmd_generate(o, gen);
    if (*tr) return cmd_train(o, tr);
    if (*route) return cmd_route(o, route);
    if (*serve) return cmd_serve(o, serve);
    if (*fixed) return cmd_eval(o, fixed, false);
    if (*oracle) return cmd_eval(o, oracle, true);
    if (*report) return cmd_report(o, report);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

int run_command(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_command(args);
}

}  // namespace diffadapt::cli
