#include "scenario_rag/cli.hpp"

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "scenario_rag/checkpoint.hpp"
#include "scenario_rag/csv.hpp"
#include "scenario_rag/error.hpp"
#include "scenario_rag/gradient_suite.hpp"
#include "scenario_rag/retrieval.hpp"
#include "scenario_rag/scenario_io.hpp"

namespace scenario_rag::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kQuerySeedSalt = 0x51554552590aULL;

[[noreturn]] void bad_config(const std::string& where, const std::string& why) {
  throw Error(ErrorCode::kValidation, "config: " + where + ": " + why);
}

// Visits every key of a JSON object, rejecting keys without a handler.
template <typename Handlers>
void visit_object(const nlohmann::json& j, const std::string& where, const Handlers& handlers) {
  if (!j.is_object()) bad_config(where, "expected an object");
  for (const auto& [key, value] : j.items()) {
    const auto it = handlers.find(key);
    if (it == handlers.end()) bad_config(where, "unknown key '" + key + "'");
    try {
      it->second(value);
    } catch (const nlohmann::json::exception&) {
      bad_config(where + "." + key, "wrong type");
    }
  }
}

using Handler = std::function<void(const nlohmann::json&)>;
using HandlerMap = std::map<std::string, Handler>;

template <typename T>
Handler field(T& target) {
  return [&target](const nlohmann::json& v) { target = v.get<T>(); };
}

Json generator_json(const GeneratorConfig& g) {
  Json clusters = Json::array();
  for (const auto& c : g.clusters) {
    clusters.push_back({{"cluster_id", c.cluster_id},
                        {"template", std::string(to_string(c.templ))},
                        {"min_frames", c.min_frames},
                        {"max_frames", c.max_frames},
                        {"jitter", {{"position", c.jitter.position}, {"speed", c.jitter.speed}, {"heading", c.jitter.heading}}}});
  }
  return {{"scenarios_per_cluster", g.scenarios_per_cluster},
          {"visual_styles", g.visual_styles},
          {"id_prefix", g.id_prefix},
          {"clusters", clusters}};
}

ClusterSpec cluster_from_json(const nlohmann::json& j, const std::string& where) {
  ClusterSpec c;
  HandlerMap h{{"cluster_id", field(c.cluster_id)},
               {"min_frames", field(c.min_frames)},
               {"max_frames", field(c.max_frames)},
               {"template",
                [&](const nlohmann::json& v) {
                  const auto t = parse_template(v.get<std::string>());
                  if (!t) bad_config(where + ".template", "unknown template '" + v.get<std::string>() + "'");
                  c.templ = *t;
                }},
               {"jitter", [&](const nlohmann::json& v) {
                  visit_object(v, where + ".jitter",
                               HandlerMap{{"position", field(c.jitter.position)},
                                          {"speed", field(c.jitter.speed)},
                                          {"heading", field(c.jitter.heading)}});
                }}};
  visit_object(j, where, h);
  return c;
}

fs::path resolve(const PipelineConfig& cfg, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : fs::path(cfg.out) / path;
}

std::string iso_timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH")) {
    char* end = nullptr;
    const long long v = std::strtoll(sde, &end, 10);
    if (end != sde && *end == '\0') t = static_cast<std::time_t>(v);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<ScenarioPrimitive> held_out_queries(const PipelineConfig& cfg) {
  GeneratorConfig g = cfg.generator;
  g.seed = query_seed(cfg);
  g.scenarios_per_cluster = cfg.eval.queries_per_cluster;
  g.id_prefix = "q" + g.id_prefix;
  return generate_dataset(g).scenarios;
}

std::int64_t cluster_of(const ScenarioPrimitive& s) {
  const auto it = s.metadata.find("cluster");
  if (it == s.metadata.end()) throw Error(ErrorCode::kValidation, s.scenario_id + " has no cluster metadata");
  return std::stoll(it->second);
}

std::vector<Embedding> embed_all(const std::vector<ScenarioPrimitive>& scenarios, const Checkpoint& ckpt) {
  std::vector<Embedding> out;
  out.reserve(scenarios.size());
  for (const auto& s : scenarios) out.emplace_back(s.scenario_id, encode(s, ckpt.params, ckpt.config));
  return out;
}

double gbr_recall(const std::vector<ScenarioPrimitive>& train, const std::map<std::string, std::int64_t>& labels,
                  const std::vector<ScenarioPrimitive>& queries, const Checkpoint& ckpt, std::size_t k) {
  const VectorIndex index = build_index(embed_all(train, ckpt));
  std::vector<LabeledQuery> q;
  for (const auto& s : queries) q.push_back({s.scenario_id, encode(s, ckpt.params, ckpt.config), cluster_of(s)});
  return recall_at_k(index, labels, q, k);
}

double vsr_recall(const std::vector<ScenarioPrimitive>& train, const std::map<std::string, std::int64_t>& labels,
                  const std::vector<ScenarioPrimitive>& queries, std::size_t k) {
  std::vector<Embedding> entries;
  for (const auto& s : train) entries.emplace_back(s.scenario_id, visual_feature(s));
  IndexMetadata meta;
  meta.metric = Metric::kCosine;
  const VectorIndex index = build_index(entries, meta);
  std::vector<LabeledQuery> q;
  for (const auto& s : queries) q.push_back({s.scenario_id, visual_feature(s), cluster_of(s)});
  return recall_at_k(index, labels, q, k);
}

LabeledDataset load_dataset(const PipelineConfig& cfg) {
  LabeledDataset ds = read_labels_csv(resolve(cfg, cfg.paths.labels));
  ds.scenarios = read_jsonl(resolve(cfg, cfg.paths.dataset));
  for (const auto& s : ds.scenarios)
    if (!ds.labels.count(s.scenario_id))
      throw Error(ErrorCode::kUnknownId, "labels file has no row for " + s.scenario_id);
  return ds;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> sizes;
  for (const auto& cell : split_csv_line(text)) {
    const double v = parse_double(cell);
    if (!(v >= 1.0) || v != static_cast<double>(static_cast<std::size_t>(v)))
      throw Error(ErrorCode::kValidation, "bench size '" + cell + "' is not a positive integer");
    sizes.push_back(static_cast<std::size_t>(v));
  }
  return sizes;
}

}  // namespace

void apply_seed(PipelineConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.generator.seed = seed;
  cfg.train.seed = seed;
}

std::uint64_t query_seed(const PipelineConfig& cfg) {
  return cfg.eval.query_seed ? *cfg.eval.query_seed : cfg.seed ^ kQuerySeedSalt;
}

nlohmann::ordered_json to_json(const PipelineConfig& cfg) {
  const ModelConfig& m = cfg.model;
  const TrainConfig& t = cfg.train;
  Json j;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["out"] = cfg.out;
  j["paths"] = {{"dataset", cfg.paths.dataset},     {"labels", cfg.paths.labels},
                {"distances", cfg.paths.distances}, {"checkpoint", cfg.paths.checkpoint},
                {"losses", cfg.paths.losses},       {"vectors", cfg.paths.vectors},
                {"index", cfg.paths.index}};
  j["generator"] = generator_json(cfg.generator);
  j["distance"] = {{"w_node", cfg.distance.w_node}, {"w_edge", cfg.distance.w_edge}, {"w_attr", cfg.distance.w_attr}};
  j["model"] = {{"hidden_dim", m.hidden_dim},
                {"latent_dim", m.latent_dim},
                {"rgcn_layers", m.rgcn_layers},
                {"heads", m.heads},
                {"attention_layers", m.attention_layers},
                {"max_nodes", m.max_nodes},
                {"max_frames", m.max_frames},
                {"decoder_hidden", m.decoder_hidden},
                {"distance_weighting", m.distance_weighting}};
  j["train"] = {{"lambda_r", t.weights.lambda_r}, {"lambda_a", t.weights.lambda_a}, {"epochs", t.epochs},
                {"batch_size", t.batch_size},     {"learning_rate", t.learning_rate}, {"beta1", t.beta1},
                {"beta2", t.beta2},               {"epsilon", t.epsilon},           {"target_percentile", t.target_percentile}};
  j["eval"] = {{"k", cfg.eval.k}, {"queries_per_cluster", cfg.eval.queries_per_cluster}};
  j["eval"]["query_seed"] = cfg.eval.query_seed ? Json(*cfg.eval.query_seed) : Json(nullptr);
  j["bench"] = {{"sizes", cfg.bench.sizes}, {"queries", cfg.bench.queries}, {"dim", cfg.bench.dim}};
  return j;
}

PipelineConfig from_json(const nlohmann::json& j, PipelineConfig base) {
  PipelineConfig cfg = std::move(base);
  ModelConfig& m = cfg.model;
  TrainConfig& t = cfg.train;
  std::optional<std::uint64_t> seed;
  HandlerMap top{
      {"seed", [&](const nlohmann::json& v) { seed = v.get<std::uint64_t>(); }},
      {"threads", field(cfg.threads)},
      {"out", field(cfg.out)},
      {"paths",
       [&](const nlohmann::json& v) {
         visit_object(v, "paths",
                      HandlerMap{{"dataset", field(cfg.paths.dataset)},     {"labels", field(cfg.paths.labels)},
                                 {"distances", field(cfg.paths.distances)}, {"checkpoint", field(cfg.paths.checkpoint)},
                                 {"losses", field(cfg.paths.losses)},       {"vectors", field(cfg.paths.vectors)},
                                 {"index", field(cfg.paths.index)}});
       }},
      {"generator",
       [&](const nlohmann::json& v) {
         visit_object(v, "generator",
                      HandlerMap{{"scenarios_per_cluster", field(cfg.generator.scenarios_per_cluster)},
                                 {"visual_styles", field(cfg.generator.visual_styles)},
                                 {"id_prefix", field(cfg.generator.id_prefix)},
                                 {"clusters", [&](const nlohmann::json& list) {
                                    if (!list.is_array()) bad_config("generator.clusters", "expected an array");
                                    cfg.generator.clusters.clear();
                                    for (std::size_t i = 0; i < list.size(); ++i)
                                      cfg.generator.clusters.push_back(
                                          cluster_from_json(list[i], "generator.clusters[" + std::to_string(i) + "]"));
                                  }}});
       }},
      {"distance",
       [&](const nlohmann::json& v) {
         visit_object(v, "distance",
                      HandlerMap{{"w_node", field(cfg.distance.w_node)},
                                 {"w_edge", field(cfg.distance.w_edge)},
                                 {"w_attr", field(cfg.distance.w_attr)}});
       }},
      {"model",
       [&](const nlohmann::json& v) {
         visit_object(v, "model",
                      HandlerMap{{"hidden_dim", field(m.hidden_dim)},
                                 {"latent_dim", field(m.latent_dim)},
                                 {"rgcn_layers", field(m.rgcn_layers)},
                                 {"heads", field(m.heads)},
                                 {"attention_layers", field(m.attention_layers)},
                                 {"max_nodes", field(m.max_nodes)},
                                 {"max_frames", field(m.max_frames)},
                                 {"decoder_hidden", field(m.decoder_hidden)},
                                 {"distance_weighting", field(m.distance_weighting)}});
       }},
      {"train",
       [&](const nlohmann::json& v) {
         visit_object(v, "train",
                      HandlerMap{{"lambda_r", field(t.weights.lambda_r)},
                                 {"lambda_a", field(t.weights.lambda_a)},
                                 {"epochs", field(t.epochs)},
                                 {"batch_size", field(t.batch_size)},
                                 {"learning_rate", field(t.learning_rate)},
                                 {"beta1", field(t.beta1)},
                                 {"beta2", field(t.beta2)},
                                 {"epsilon", field(t.epsilon)},
                                 {"target_percentile", field(t.target_percentile)}});
       }},
      {"eval",
       [&](const nlohmann::json& v) {
         visit_object(v, "eval",
                      HandlerMap{{"k", field(cfg.eval.k)},
                                 {"queries_per_cluster", field(cfg.eval.queries_per_cluster)},
                                 {"query_seed", [&](const nlohmann::json& s) {
                                    if (s.is_null())
                                      cfg.eval.query_seed.reset();
                                    else
                                      cfg.eval.query_seed = s.get<std::uint64_t>();
                                  }}});
       }},
      {"bench",
       [&](const nlohmann::json& v) {
         visit_object(v, "bench",
                      HandlerMap{{"sizes", field(cfg.bench.sizes)},
                                 {"queries", field(cfg.bench.queries)},
                                 {"dim", field(cfg.bench.dim)}});
       }},
  };
  visit_object(j, "top level", top);
  if (seed) apply_seed(cfg, *seed);
  return cfg;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scenario retrieval toolkit: synthetic driving scenarios, graph DTW, embedding training and k-NN retrieval."};
  app.name("scenario-rag");

  std::uint64_t seed = 1;
  std::string config_path, out_dir;
  unsigned threads = 1;
  bool dump_config = false;
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every random choice");
  app.add_option("--config", config_path, "JSON config file (see --dump-config)");
  auto* out_opt = app.add_option("--out", out_dir, "Output directory for artifacts");
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads for parallel stages")->check(CLI::PositiveNumber);
  app.add_flag("--dump-config", dump_config, "Print the effective config as JSON and exit");
  app.require_subcommand(0, 1);

  int per_cluster = 0, styles = 0;
  auto* gen = app.add_subcommand("gen-data", "Write a labelled synthetic dataset (JSONL + labels CSV)");
  auto* per_cluster_opt = gen->add_option("--per-cluster", per_cluster, "Scenarios per cluster");
  auto* styles_opt = gen->add_option("--styles", styles, "Number of visual styles");

  std::string dataset_path;
  auto* dtw = app.add_subcommand("dtw-matrix", "Write the pairwise graph-DTW distance matrix CSV");
  dtw->add_option("--dataset", dataset_path, "Dataset JSONL (default: <out>/dataset.jsonl)");

  int epochs = 0, batch_size = 0;
  double lr = 0.0, lambda_r = 0.0, lambda_a = 0.0;
  auto* train = app.add_subcommand("train-embed", "Train the embedding model; write checkpoint and loss CSV");
  auto* epochs_opt = train->add_option("--epochs", epochs, "Training epochs");
  auto* batch_opt = train->add_option("--batch-size", batch_size, "Mini-batch size");
  auto* lr_opt = train->add_option("--lr", lr, "Learning rate");
  auto* lr_w_opt = train->add_option("--lambda-r", lambda_r, "Restoration loss weight");
  auto* la_w_opt = train->add_option("--lambda-a", lambda_a, "Alignment loss weight");

  std::string embed_dataset, embed_output;
  auto* embed = app.add_subcommand("embed", "Encode a dataset into a vectors CSV");
  embed->add_option("--dataset", embed_dataset, "Dataset JSONL (default: <out>/dataset.jsonl)");
  embed->add_option("--output", embed_output, "Vectors CSV (default: <out>/vectors.csv)");

  std::string metric_name = "euclidean";
  auto* build = app.add_subcommand("build-index", "Build and save the vector index from a vectors CSV");
  build->add_option("--metric", metric_name, "euclidean or cosine")->check(CLI::IsMember({"euclidean", "cosine"}));

  std::string scenario_arg;
  std::size_t k = 0;
  auto* query = app.add_subcommand("query", "Print the k nearest scenarios as CSV");
  query->add_option("--scenario", scenario_arg, "Scenario id in the dataset, or a JSONL file of scenarios")->required();
  auto* k_opt = query->add_option("-k", k, "Number of neighbours")->check(CLI::PositiveNumber);

  std::string sizes_text;
  std::size_t bench_queries = 0, bench_dim = 0;
  auto* bench = app.add_subcommand("bench", "Time exact queries over random indexes of several sizes");
  auto* sizes_opt = bench->add_option("--sizes", sizes_text, "Comma-separated ascending index sizes");
  auto* bq_opt = bench->add_option("--queries", bench_queries, "Queries per size")->check(CLI::PositiveNumber);
  auto* bd_opt = bench->add_option("--dim", bench_dim, "Vector dimension")->check(CLI::PositiveNumber);

  std::string mode;
  std::size_t eval_k = 0;
  auto* eval = app.add_subcommand("eval-retrieval", "Recall@k of graph-based or visual-similarity retrieval");
  eval->add_option("--mode", mode, "gbr or vsr")->required()->check(CLI::IsMember({"gbr", "vsr"}));
  auto* eval_k_opt = eval->add_option("-k", eval_k, "Neighbours per query")->check(CLI::PositiveNumber);

  auto* ablation = app.add_subcommand("eval-ablation", "Train restoration-only and full variants; compare recall@k");

  int gc_points = 10;
  std::size_t gc_coords = 200;
  auto* grad = app.add_subcommand("grad-check", "Finite-difference gradient checks of every loss");
  grad->add_option("--points", gc_points, "Random points per objective")->check(CLI::PositiveNumber);
  grad->add_option("--coords", gc_coords, "Coordinates checked per point")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    PipelineConfig cfg;
    if (!config_path.empty()) {
      std::ifstream in = open_input(config_path);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::kParse, config_path + ": " + e.what());
      }
      cfg = from_json(j, cfg);
    }
    if (*seed_opt) apply_seed(cfg, seed);
    if (*out_opt) cfg.out = out_dir;
    if (*threads_opt) cfg.threads = threads;
    if (*per_cluster_opt) cfg.generator.scenarios_per_cluster = per_cluster;
    if (*styles_opt) cfg.generator.visual_styles = styles;
    if (*epochs_opt) cfg.train.epochs = epochs;
    if (*batch_opt) cfg.train.batch_size = batch_size;
    if (*lr_opt) cfg.train.learning_rate = lr;
    if (*lr_w_opt) cfg.train.weights.lambda_r = lambda_r;
    if (*la_w_opt) cfg.train.weights.lambda_a = lambda_a;
    if (*k_opt) cfg.eval.k = k;
    if (*eval_k_opt) cfg.eval.k = eval_k;
    if (*sizes_opt) cfg.bench.sizes = parse_sizes(sizes_text);
    if (*bq_opt) cfg.bench.queries = bench_queries;
    if (*bd_opt) cfg.bench.dim = bench_dim;

    check_config(cfg.generator);
    check_weights(cfg.distance);
    check_config(cfg.model);
    check_config(cfg.train);
    if (cfg.eval.k == 0 || cfg.eval.queries_per_cluster < 1)
      throw Error(ErrorCode::kValidation, "eval.k and eval.queries_per_cluster must be >= 1");
    if (cfg.threads == 0) throw Error(ErrorCode::kValidation, "threads must be >= 1");

    if (dump_config) {
      out << to_json(cfg).dump(2) << '\n';
      return 0;
    }
    if (app.get_subcommands().empty()) {
      err << "error: a subcommand is required\n\n" << app.help();
      return 1;
    }

    if (gen->parsed()) {
      const LabeledDataset ds = generate_dataset(cfg.generator);
      write_jsonl(ds.scenarios, resolve(cfg, cfg.paths.dataset));
      write_labels_csv(ds, resolve(cfg, cfg.paths.labels));
      out << "wrote " << ds.scenarios.size() << " scenarios to " << resolve(cfg, cfg.paths.dataset).string() << '\n';
    } else if (dtw->parsed()) {
      const fs::path in = dataset_path.empty() ? resolve(cfg, cfg.paths.dataset) : fs::path(dataset_path);
      const DistanceMatrix dm = distance_matrix(read_jsonl(in), cfg.distance, cfg.threads);
      write_distance_csv(dm, resolve(cfg, cfg.paths.distances));
      out << "wrote " << dm.size() << "x" << dm.size() << " distances to "
          << resolve(cfg, cfg.paths.distances).string() << '\n';
    } else if (train->parsed()) {
      LabeledDataset ds;
      ds.scenarios = read_jsonl(resolve(cfg, cfg.paths.dataset));
      const DistanceMatrix dm = read_distance_csv(resolve(cfg, cfg.paths.distances));
      const TrainResult res = train_embedding(ds, dm, cfg.train, cfg.model);
      save_checkpoint({cfg.model, res.params}, resolve(cfg, cfg.paths.checkpoint));
      write_loss_csv(res.history, resolve(cfg, cfg.paths.losses));
      out << "trained " << cfg.train.epochs << " epochs; checkpoint " << resolve(cfg, cfg.paths.checkpoint).string()
          << '\n';
    } else if (embed->parsed()) {
      const fs::path in = embed_dataset.empty() ? resolve(cfg, cfg.paths.dataset) : fs::path(embed_dataset);
      const fs::path target = embed_output.empty() ? resolve(cfg, cfg.paths.vectors) : fs::path(embed_output);
      const Checkpoint ckpt = load_checkpoint(resolve(cfg, cfg.paths.checkpoint));
      const auto vectors = embed_all(read_jsonl(in), ckpt);
      write_vectors_csv(vectors, target);
      out << "wrote " << vectors.size() << " vectors to " << target.string() << '\n';
    } else if (build->parsed()) {
      IndexMetadata meta;
      meta.metric = *parse_metric(metric_name);
      const fs::path ckpt = resolve(cfg, cfg.paths.checkpoint);
      if (fs::exists(ckpt)) meta.checkpoint_hash = file_hash(ckpt);
      meta.build_timestamp = iso_timestamp();
      const VectorIndex index = build_index(read_vectors_csv(resolve(cfg, cfg.paths.vectors)), meta);
      save_index(index, resolve(cfg, cfg.paths.index));
      out << "indexed " << index.size() << " vectors into " << resolve(cfg, cfg.paths.index).string() << '\n';
    } else if (query->parsed()) {
      const VectorIndex index = load_index(resolve(cfg, cfg.paths.index));
      const Checkpoint ckpt = load_checkpoint(resolve(cfg, cfg.paths.checkpoint));
      std::vector<ScenarioPrimitive> queries;
      if (fs::is_regular_file(scenario_arg)) {
        queries = read_jsonl(fs::path(scenario_arg));
      } else {
        for (auto& s : read_jsonl(resolve(cfg, cfg.paths.dataset)))
          if (s.scenario_id == scenario_arg) queries.push_back(std::move(s));
        if (queries.empty()) throw Error(ErrorCode::kUnknownId, "no scenario or file named '" + scenario_arg + "'");
      }
      out << "query_id,rank,scenario_id,distance\n";
      for (const auto& s : queries) {
        const QueryResult res = index.query_topk(encode(s, ckpt.params, ckpt.config), cfg.eval.k);
        for (std::size_t r = 0; r < res.size(); ++r)
          out << s.scenario_id << ',' << r + 1 << ',' << res[r].id << ',' << format_double(res[r].distance) << '\n';
      }
    } else if (bench->parsed()) {
      const auto rows = bench_latency(cfg.bench.sizes, cfg.bench.queries, cfg.bench.dim, cfg.seed);
      write_bench_csv(rows, resolve(cfg, "bench.csv"));
      std::ofstream answers = open_output(resolve(cfg, "bench_answers.csv"));
      answers << "size,queries,answer_digest\n";
      for (const auto& r : rows) answers << r.size << ',' << cfg.bench.queries << ',' << r.answer_digest << '\n';
      if (!answers) throw Error(ErrorCode::kIo, "failed writing bench answers");
      out << "size,mean_us,p99_us\n";
      for (const auto& r : rows) out << r.size << ',' << format_double(r.mean_us) << ',' << format_double(r.p99_us) << '\n';
    } else if (eval->parsed()) {
      const LabeledDataset ds = load_dataset(cfg);
      const auto queries = held_out_queries(cfg);
      const double recall = mode == "gbr"
                                ? gbr_recall(ds.scenarios, ds.labels, queries,
                                             load_checkpoint(resolve(cfg, cfg.paths.checkpoint)), cfg.eval.k)
                                : vsr_recall(ds.scenarios, ds.labels, queries, cfg.eval.k);
      std::ostringstream csv;
      csv << "mode,k,queries,recall\n" << mode << ',' << cfg.eval.k << ',' << queries.size() << ','
          << format_double(recall) << '\n';
      std::ofstream file = open_output(resolve(cfg, "retrieval_" + mode + ".csv"));
      file << csv.str();
      if (!file) throw Error(ErrorCode::kIo, "failed writing retrieval report");
      out << csv.str();
    } else if (ablation->parsed()) {
      const LabeledDataset ds = load_dataset(cfg);
      const DistanceMatrix dm = read_distance_csv(resolve(cfg, cfg.paths.distances));
      const auto queries = held_out_queries(cfg);
      std::ostringstream csv;
      csv << "variant,lambda_r,lambda_a,recall_at_k\n";
      for (const auto& [name, la] : {std::pair<const char*, double>{"emb-rec", 0.0}, {"emb-full", 1.0}}) {
        TrainConfig tc = cfg.train;
        tc.weights.lambda_a = la;
        const TrainResult res = train_embedding(ds, dm, tc, cfg.model);
        const double recall = gbr_recall(ds.scenarios, ds.labels, queries, {cfg.model, res.params}, cfg.eval.k);
        csv << name << ',' << format_double(tc.weights.lambda_r) << ',' << format_double(la) << ','
            << format_double(recall) << '\n';
      }
      std::ofstream file = open_output(resolve(cfg, "ablation.csv"));
      file << csv.str();
      if (!file) throw Error(ErrorCode::kIo, "failed writing ablation report");
      out << csv.str();
    } else if (grad->parsed()) {
      SuiteOptions opt;
      opt.points = gc_points;
      opt.coordinates = gc_coords;
      opt.seed = cfg.seed;
      opt.model = cfg.model;
      const auto rows = run_gradient_suite(opt);
      std::ostringstream csv;
      csv << "objective,points,checked,skipped,max_rel_error,pass\n";
      bool all = true;
      for (const auto& r : rows) {
        csv << r.objective << ',' << r.points << ',' << r.checked << ',' << r.skipped << ','
            << format_double(r.max_rel_error) << ',' << (r.pass ? "true" : "false") << '\n';
        all = all && r.pass;
      }
      std::ofstream file = open_output(resolve(cfg, "grad_check.csv"));
      file << csv.str();
      if (!file) throw Error(ErrorCode::kIo, "failed writing gradient report");
      out << csv.str();
      if (!all) {
        err << "error: gradient check above tolerance\n";
        return 1;
      }
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.is_io() ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace scenario_rag::cli
