// Command-line front end: ingest datasets, train/evaluate link prediction,
// run the sync-vs-async latency benchmark, and inspect attention weights.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "tge/bench.hpp"
#include "tge/event_store.hpp"
#include "tge/metrics.hpp"
#include "tge/model.hpp"
#include "tge/training.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitBadInput = 2;

struct CliError {
  int code;
  std::string message;
};

struct RunConfig {
  std::string dataset;
  std::string out = "out";
  std::uint64_t seed = 0;
  std::size_t batch = 200;
  double lr = 1e-4;
  int epochs = 20;
  int patience = 5;
  std::size_t heads = 2;
  std::size_t mailbox_slots = 10;
  int fanout = 10;
  int hops = 2;
  double dropout = 0.1;
  std::size_t hidden = 80;
  double train_frac = 0.7;
  double val_frac = 0.15;
  std::size_t queue_capacity = 4;
  std::string task = "link";
  std::string loss = "mlp";
  std::string mode = "deterministic";
  std::size_t synthetic_events = 5000;
};

const std::map<std::string, int> kConfigKeys = {
    {"dataset", 0},       {"out", 1},          {"seed", 2},
    {"batch", 3},         {"lr", 4},           {"epochs", 5},
    {"patience", 6},      {"heads", 7},        {"mailbox_slots", 8},
    {"fanout", 9},        {"hops", 10},        {"dropout", 11},
    {"hidden", 12},       {"train_frac", 13},  {"val_frac", 14},
    {"queue_capacity", 15}, {"task", 16},      {"loss", 17},
    {"mode", 18},         {"synthetic_events", 19}};

template <typename T>
void parse_into(const std::string& value, const std::string& key, T& out) {
  std::istringstream is(value);
  is >> out;
  if (is.fail() || !is.eof())
    throw CliError{kExitBadInput, "config key '" + key + "': bad value '" + value + "'"};
}

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  auto it = kConfigKeys.find(key);
  if (it == kConfigKeys.end())
    throw CliError{kExitBadInput, "config key '" + key + "' is not recognized"};
  switch (it->second) {
    case 0: cfg.dataset = value; break;
    case 1: cfg.out = value; break;
    case 2: parse_into(value, key, cfg.seed); break;
    case 3: parse_into(value, key, cfg.batch); break;
    case 4: parse_into(value, key, cfg.lr); break;
    case 5: parse_into(value, key, cfg.epochs); break;
    case 6: parse_into(value, key, cfg.patience); break;
    case 7: parse_into(value, key, cfg.heads); break;
    case 8: parse_into(value, key, cfg.mailbox_slots); break;
    case 9: parse_into(value, key, cfg.fanout); break;
    case 10: parse_into(value, key, cfg.hops); break;
    case 11: parse_into(value, key, cfg.dropout); break;
    case 12: parse_into(value, key, cfg.hidden); break;
    case 13: parse_into(value, key, cfg.train_frac); break;
    case 14: parse_into(value, key, cfg.val_frac); break;
    case 15: parse_into(value, key, cfg.queue_capacity); break;
    case 16: cfg.task = value; break;
    case 17: cfg.loss = value; break;
    case 18: cfg.mode = value; break;
    case 19: parse_into(value, key, cfg.synthetic_events); break;
  }
}

void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError{kExitBadInput, "config file not found: " + path};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t')) line.pop_back();
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw CliError{kExitBadInput,
                     "config line " + std::to_string(line_no) + ": expected key=value"};
    apply_config_entry(cfg, line.substr(0, eq), line.substr(eq + 1));
  }
}

void write_resolved_config(const RunConfig& cfg, const fs::path& path) {
  std::ofstream out(path);
  out << "dataset=" << cfg.dataset << '\n'
      << "out=" << cfg.out << '\n'
      << "seed=" << cfg.seed << '\n'
      << "batch=" << cfg.batch << '\n'
      << "lr=" << cfg.lr << '\n'
      << "epochs=" << cfg.epochs << '\n'
      << "patience=" << cfg.patience << '\n'
      << "heads=" << cfg.heads << '\n'
      << "mailbox_slots=" << cfg.mailbox_slots << '\n'
      << "fanout=" << cfg.fanout << '\n'
      << "hops=" << cfg.hops << '\n'
      << "dropout=" << cfg.dropout << '\n'
      << "hidden=" << cfg.hidden << '\n'
      << "train_frac=" << cfg.train_frac << '\n'
      << "val_frac=" << cfg.val_frac << '\n'
      << "queue_capacity=" << cfg.queue_capacity << '\n'
      << "task=" << cfg.task << '\n'
      << "loss=" << cfg.loss << '\n'
      << "mode=" << cfg.mode << '\n'
      << "synthetic_events=" << cfg.synthetic_events << '\n';
}

tge::EventLog load_dataset(const RunConfig& cfg) {
  if (cfg.dataset.empty())
    throw CliError{kExitBadInput, "no dataset given (use --dataset)"};
  if (cfg.dataset == "synthetic" || cfg.dataset == "synthetic-shuffled") {
    tge::SyntheticSpec spec;
    spec.seed = cfg.seed;
    spec.events = cfg.synthetic_events;
    spec.shuffled = cfg.dataset == "synthetic-shuffled";
    return tge::make_periodic_log(spec);
  }
  if (!fs::exists(cfg.dataset))
    throw CliError{kExitBadInput, "dataset not found: " + cfg.dataset};
  std::ifstream in(cfg.dataset);
  if (!in) throw CliError{kExitBadInput, "dataset not readable: " + cfg.dataset};
  return tge::parse_interaction_csv(in);
}

tge::TrainConfig to_train_config(const RunConfig& cfg) {
  tge::TrainConfig tc;
  tc.batch_size = cfg.batch;
  tc.lr = cfg.lr;
  tc.dropout = cfg.dropout;
  tc.patience = cfg.patience;
  tc.max_epochs = cfg.epochs;
  tc.seed = cfg.seed;
  tc.heads = cfg.heads;
  tc.hidden = cfg.hidden;
  tc.mailbox_slots = cfg.mailbox_slots;
  tc.hops = cfg.hops;
  tc.fanout = cfg.fanout;
  tc.train_frac = cfg.train_frac;
  tc.val_frac = cfg.val_frac;
  tc.queue_capacity = cfg.queue_capacity;
  if (cfg.loss == "mlp")
    tc.loss = tge::LossKind::Mlp;
  else if (cfg.loss == "dot")
    tc.loss = tge::LossKind::Dot;
  else
    throw CliError{kExitBadInput, "config key 'loss': expected mlp or dot, got " + cfg.loss};
  if (cfg.mode == "deterministic")
    tc.async_replay = false;
  else if (cfg.mode == "async")
    tc.async_replay = true;
  else
    throw CliError{kExitBadInput,
                   "config key 'mode': expected deterministic or async, got " + cfg.mode};
  return tc;
}

void print_metrics(const std::string& name, const tge::EvalMetrics& m) {
  std::cout << name << ": loss=" << m.loss << " ap=" << (m.ap ? std::to_string(*m.ap) : "nan")
            << " accuracy=" << m.accuracy
            << " auc=" << (m.auc ? std::to_string(*m.auc) : "nan") << " pairs=" << m.pairs
            << "\n";
}

int cmd_ingest(const RunConfig& cfg, const std::string& csv_path) {
  RunConfig effective = cfg;
  effective.dataset = csv_path;
  tge::EventLog log = load_dataset(effective);
  fs::create_directories(cfg.out);
  const fs::path meta_path = fs::path(cfg.out) / "dataset.meta";
  std::ofstream meta(meta_path);
  tge::write_metadata(log, meta);
  std::cout << "ingested " << log.events.size() << " events, " << log.num_nodes << " nodes, d_e="
            << log.d_e << "\nmetadata written to " << meta_path.string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& checkpoint_in) {
  tge::EventLog log = load_dataset(cfg);
  tge::TrainConfig tc = to_train_config(cfg);
  if (tc.async_replay) {
    std::cerr << "note: training always runs deterministically; async applies to eval/bench\n";
    tc.async_replay = false;
  }
  tge::Engine engine(log, tc);
  fs::create_directories(cfg.out);
  write_resolved_config(cfg, fs::path(cfg.out) / "config.resolved");

  if (!checkpoint_in.empty()) {
    std::ifstream in(checkpoint_in, std::ios::binary);
    if (!in) throw CliError{kExitBadInput, "checkpoint not found: " + checkpoint_in};
    engine.set_params(tge::load_checkpoint(in));
  }

  std::ofstream metrics(fs::path(cfg.out) / "metrics.csv");
  if (cfg.task == "link" || checkpoint_in.empty()) {
    tge::FitResult fit = engine.fit(&metrics);
    std::cout << "best epoch " << fit.best_epoch << " val_ap=" << fit.best_val_ap << " ("
              << fit.epochs_run << " epochs run)\n";
    tge::EvalMetrics test = engine.evaluate_with_warmup(engine.split().test);
    tge::EpochRow row{fit.best_epoch, "test", test.loss, test.ap, test.auc, test.accuracy, 0.0};
    tge::write_metrics_row(metrics, row);
    print_metrics("test", test);
  }

  if (cfg.task == "node" || cfg.task == "edge") {
    const tge::Task task = cfg.task == "node" ? tge::Task::Node : tge::Task::Edge;
    tge::HeadMetrics head = engine.fit_label_head(task);
    std::cout << cfg.task << " head: train_auc=" << head.train_auc
              << " test_auc=" << head.eval_auc << " (train n=" << head.train_count
              << ", test n=" << head.eval_count << ")\n";
  } else if (cfg.task != "link") {
    throw CliError{kExitBadInput, "config key 'task': expected link, edge or node, got " +
                                      cfg.task};
  }

  const fs::path ckpt_path = fs::path(cfg.out) / "checkpoint.bin";
  std::ofstream ckpt(ckpt_path, std::ios::binary);
  tge::save_checkpoint(engine.params(), ckpt);
  std::cout << "checkpoint written to " << ckpt_path.string() << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path) {
  std::ifstream in(checkpoint_path, std::ios::binary);
  if (!in) throw CliError{kExitBadInput, "checkpoint not found: " + checkpoint_path};
  tge::ModelParams params = tge::load_checkpoint(in);

  RunConfig adjusted = cfg;
  adjusted.heads = params.cfg.heads;
  adjusted.hidden = params.cfg.hidden;
  adjusted.mailbox_slots = params.cfg.mailbox_slots;
  tge::EventLog log = load_dataset(adjusted);
  tge::Engine engine(log, to_train_config(adjusted));
  engine.set_params(std::move(params));

  tge::EvalMetrics val = engine.evaluate_with_warmup(engine.split().val);
  print_metrics("val", val);
  tge::EvalMetrics test = engine.evaluate_with_warmup(engine.split().test);
  print_metrics("test", test);

  fs::create_directories(cfg.out);
  std::ofstream metrics(fs::path(cfg.out) / "eval_metrics.csv");
  tge::write_metrics_header(metrics);
  tge::write_metrics_row(metrics, {0, "val", val.loss, val.ap, val.auc, val.accuracy, 0.0});
  tge::write_metrics_row(metrics, {0, "test", test.loss, test.ap, test.auc, test.accuracy, 0.0});
  return 0;
}

int cmd_bench(const RunConfig& cfg, const std::string& scenario_path,
              const std::string& checkpoint_path) {
  tge::ScenarioConfig scenario;
  if (!scenario_path.empty()) {
    std::ifstream in(scenario_path);
    if (!in) throw CliError{kExitBadInput, "scenario not found: " + scenario_path};
    try {
      scenario = tge::parse_scenario(in);
    } catch (const std::invalid_argument& e) {
      throw CliError{kExitBadInput, e.what()};
    }
  }

  tge::EventLog log;
  if (!cfg.dataset.empty()) {
    log = load_dataset(cfg);
  } else {
    tge::SyntheticSpec spec;
    spec.seed = scenario.seed;
    spec.events = scenario.events;
    log = tge::make_periodic_log(spec);
  }

  tge::ModelParams params = [&] {
    if (!checkpoint_path.empty()) {
      std::ifstream in(checkpoint_path, std::ios::binary);
      if (!in) throw CliError{kExitBadInput, "checkpoint not found: " + checkpoint_path};
      return tge::load_checkpoint(in);
    }
    tge::ModelConfig mc;
    mc.d = mc.d_e = static_cast<std::size_t>(log.d_e);
    mc.mailbox_slots = cfg.mailbox_slots;
    mc.heads = cfg.heads;
    mc.hidden = cfg.hidden;
    std::mt19937_64 rng(scenario.seed);
    return tge::ModelParams::init(mc, rng);
  }();

  std::vector<tge::PipelineStats> stats;
  stats.push_back(tge::run_sync(log, params, scenario));
  stats.push_back(tge::run_async(log, params, scenario));

  fs::create_directories(cfg.out);
  const fs::path csv_path = fs::path(cfg.out) / "bench.csv";
  std::ofstream csv(csv_path);
  tge::write_bench_csv(csv, stats);
  std::cout << tge::format_bench_table(stats) << "results written to " << csv_path.string()
            << "\n";
  return 0;
}

int cmd_explain(const RunConfig& cfg, std::int64_t node, double t,
                const std::string& checkpoint_path) {
  std::ifstream in(checkpoint_path, std::ios::binary);
  if (!in) throw CliError{kExitBadInput, "checkpoint not found: " + checkpoint_path};
  tge::ModelParams params = tge::load_checkpoint(in);

  RunConfig adjusted = cfg;
  adjusted.heads = params.cfg.heads;
  adjusted.hidden = params.cfg.hidden;
  adjusted.mailbox_slots = params.cfg.mailbox_slots;
  tge::EventLog log = load_dataset(adjusted);
  tge::Engine engine(log, to_train_config(adjusted));
  engine.set_params(std::move(params));

  // replay everything strictly before t so the mailbox reflects that prefix
  std::size_t prefix = 0;
  while (prefix < log.events.size() && log.events[prefix].timestamp < t) ++prefix;
  engine.replay({0, prefix});
  engine.encode_at(node, t);

  std::cout << "mail_timestamp,attention_weight\n";
  for (const tge::ExplainEntry& e : engine.explain(node, t))
    std::cout << e.mail_timestamp << "," << e.weight << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming temporal-graph embedding engine"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path, checkpoint_path, scenario_path, csv_path;
  std::int64_t explain_node = 0;
  double explain_t = 0.0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--dataset", cfg.dataset,
                    "CSV path, or 'synthetic' / 'synthetic-shuffled'");
    sub->add_option("--out", cfg.out, "output directory");
    sub->add_option("--seed", cfg.seed, "RNG seed");
    sub->add_option("--batch", cfg.batch, "batch size");
    sub->add_option("--lr", cfg.lr, "learning rate");
    sub->add_option("--epochs", cfg.epochs, "max training epochs");
    sub->add_option("--patience", cfg.patience, "early-stopping patience");
    sub->add_option("--heads", cfg.heads, "attention heads");
    sub->add_option("--mailbox-slots", cfg.mailbox_slots, "mailbox capacity m");
    sub->add_option("--fanout", cfg.fanout, "sampled neighbors per hop");
    sub->add_option("--hops", cfg.hops, "propagation hops");
    sub->add_option("--dropout", cfg.dropout, "dropout rate");
    sub->add_option("--hidden", cfg.hidden, "MLP hidden size");
    sub->add_option("--task", cfg.task, "link | edge | node");
    sub->add_option("--loss", cfg.loss, "mlp | dot");
    sub->add_option("--mode", cfg.mode, "deterministic | async");
    sub->add_option("--synthetic-events", cfg.synthetic_events,
                    "event count for synthetic datasets");
  };

  CLI::App* ingest = app.add_subcommand("ingest", "parse a CSV log and write its metadata");
  ingest->add_option("csv", csv_path, "dataset CSV file")->required();
  add_common(ingest);

  CLI::App* train = app.add_subcommand("train", "train link prediction (and optional heads)");
  add_common(train);
  train->add_option("--checkpoint", checkpoint_path, "start from an existing checkpoint");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on val and test");
  eval->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
  add_common(eval);

  CLI::App* bench = app.add_subcommand("bench", "sync vs async pipeline latency");
  bench->add_option("scenario", scenario_path, "scenario key=value file");
  add_common(bench);
  bench->add_option("--checkpoint", checkpoint_path, "use trained weights");

  CLI::App* explain = app.add_subcommand("explain", "rank mailbox attention for one node");
  explain->add_option("node", explain_node, "node id")->required();
  explain->add_option("t", explain_t, "query timestamp")->required();
  explain->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
  add_common(explain);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (!config_path.empty()) {
      // precedence: CLI flags > config file > defaults
      RunConfig from_file = cfg;
      load_config_file(from_file, config_path);
      CLI::App* active = app.get_subcommands().front();
      auto keep_cli = [&](const std::string& flag, auto member) {
        const CLI::Option* opt = active->get_option_no_throw(flag);
        if (opt && opt->count() > 0) from_file.*member = cfg.*member;
      };
      keep_cli("--dataset", &RunConfig::dataset);
      keep_cli("--out", &RunConfig::out);
      keep_cli("--seed", &RunConfig::seed);
      keep_cli("--batch", &RunConfig::batch);
      keep_cli("--lr", &RunConfig::lr);
      keep_cli("--epochs", &RunConfig::epochs);
      keep_cli("--patience", &RunConfig::patience);
      keep_cli("--heads", &RunConfig::heads);
      keep_cli("--mailbox-slots", &RunConfig::mailbox_slots);
      keep_cli("--fanout", &RunConfig::fanout);
      keep_cli("--hops", &RunConfig::hops);
      keep_cli("--dropout", &RunConfig::dropout);
      keep_cli("--hidden", &RunConfig::hidden);
      keep_cli("--task", &RunConfig::task);
      keep_cli("--loss", &RunConfig::loss);
      keep_cli("--mode", &RunConfig::mode);
      keep_cli("--synthetic-events", &RunConfig::synthetic_events);
      cfg = from_file;
    }

    if (ingest->parsed()) return cmd_ingest(cfg, csv_path);
    if (train->parsed()) return cmd_train(cfg, checkpoint_path);
    if (eval->parsed()) return cmd_eval(cfg, checkpoint_path);
    if (bench->parsed()) return cmd_bench(cfg, scenario_path, checkpoint_path);
    if (explain->parsed()) return cmd_explain(cfg, explain_node, explain_t, checkpoint_path);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
