#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "chanmt/decode.hpp"
#include "chanmt/error.hpp"
#include "chanmt/experiment.hpp"
#include "chanmt/hash.hpp"

namespace chanmt {

namespace {

using nlohmann::json;

const std::vector<std::pair<Stage, std::string>>& stage_names() {
  static const std::vector<std::pair<Stage, std::string>> names = {
      {Stage::kTrainTeachers, "train_teachers"}, {Stage::kPseudo, "pseudo"}, {Stage::kKd, "kd"},
      {Stage::kIl, "il"},       {Stage::kQ, "q"},           {Stage::kDecode, "decode"},
      {Stage::kEval, "eval"},   {Stage::kBench, "bench"}};
  return names;
}

/// Reads known keys of one JSON object and rejects the rest.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path(key) + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

  void finish() const {
    std::vector<std::string> unknown;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) unknown.push_back(path(it.key().c_str()));
    }
    if (unknown.empty()) return;
    std::string msg = "unknown config fields:";
    for (const auto& u : unknown) msg += " " + u;
    throw ConfigError(msg);
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

json train_json(const TrainOptions& o) {
  return {{"epochs", o.epochs},         {"learning_rate", o.learning_rate}, {"weight_decay", o.weight_decay},
          {"dropout", o.dropout},       {"max_tokens", o.max_tokens},       {"accumulate", o.accumulate},
          {"patience", o.patience}};
}

void read_train(const json& j, const std::string& where, TrainOptions& o) {
  Fields f(j, where);
  f.read("epochs", o.epochs);
  f.read("learning_rate", o.learning_rate);
  f.read("weight_decay", o.weight_decay);
  f.read("dropout", o.dropout);
  f.read("max_tokens", o.max_tokens);
  f.read("accumulate", o.accumulate);
  f.read("patience", o.patience);
  f.finish();
}

void check_train(const TrainOptions& o, const std::string& where, std::vector<std::string>& errors) {
  if (o.epochs < 1) errors.push_back(where + ".epochs must be >= 1");
  if (!(o.learning_rate > 0.0)) errors.push_back(where + ".learning_rate must be > 0");
  if (!(o.weight_decay >= 0.0)) errors.push_back(where + ".weight_decay must be >= 0");
  if (!(o.dropout >= 0.0 && o.dropout < 1.0)) errors.push_back(where + ".dropout must lie in [0, 1)");
  if (o.max_tokens < 1) errors.push_back(where + ".max_tokens must be >= 1");
  if (o.accumulate < 1) errors.push_back(where + ".accumulate must be >= 1");
  if (o.patience < 0) errors.push_back(where + ".patience must be >= 0");
}

ExperimentConfig desk() {
  ExperimentConfig c;
  c.name = "desk";
  c.task.kind = TaskKind::kHomophone;
  c.teacher.epochs = 10;
  c.kd = c.teacher;
  c.il.mix_p = 0.5;
  c.il.train.epochs = 2;
  c.q.max_updates = 600;
  c.q.eval_interval = 50;
  c.output_dir = "runs/desk";
  return c;
}

ExperimentConfig micro() {
  ExperimentConfig c = desk();
  c.name = "micro";
  c.task.vocab_size = 6;
  c.task.min_length = 1;
  c.task.max_length = 2;
  c.task.noise = 0.0;
  c.task.homophone_fraction = 0.5;
  c.train_size = 2000;
  c.dev_size = 200;
  c.test_size = 200;
  c.model = {16, 32, 1, 2, 32};
  c.teacher.max_tokens = 32;
  c.kd = c.teacher;
  c.max_length = 3;
  c.q.max_updates = 10000;
  c.q.eval_interval = 100;
  c.q.learning_rate = 1e-3;
  c.q_dev_size = 200;
  c.output_dir = "runs/micro";
  return c;
}

ExperimentConfig smoke() {
  ExperimentConfig c = desk();
  c.name = "smoke";
  c.task.vocab_size = 12;
  c.task.min_length = 2;
  c.task.max_length = 5;
  c.train_size = 300;
  c.dev_size = 40;
  c.test_size = 40;
  c.model = {16, 32, 1, 2, 32};
  c.teacher.epochs = 2;
  c.teacher.max_tokens = 64;
  c.kd = c.teacher;
  c.il.train.epochs = 1;
  c.q.max_updates = 40;
  c.q.eval_interval = 20;
  c.q.collect_per_round = 8;
  c.q.beam50 = 10;
  c.q_dev_size = 20;
  c.seeds = {1};
  c.speed.probe_size = 8;
  c.output_dir = "runs/smoke";
  return c;
}

}  // namespace

std::string to_string(Stage stage) {
  for (const auto& [s, n] : stage_names()) {
    if (s == stage) return n;
  }
  throw ContractError("unknown stage");
}

Stage parse_stage(std::string_view name) {
  if (name == "train") return Stage::kTrainTeachers;
  for (const auto& [s, n] : stage_names()) {
    if (n == name) return s;
  }
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

std::vector<Stage> all_stages() {
  return {Stage::kTrainTeachers, Stage::kPseudo, Stage::kKd, Stage::kIl,
          Stage::kQ,             Stage::kDecode, Stage::kBench, Stage::kEval};
}

ExperimentConfig preset(std::string_view name) {
  if (name == "desk") return desk();
  if (name == "micro") return micro();
  if (name == "smoke") return smoke();
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
  std::vector<std::string> errors;
  try {
    task.validate();
  } catch (const ConfigError& e) {
    errors.push_back(e.what());
  }
  if (train_size < 1) errors.push_back("data.train must be >= 1");
  if (dev_size < 1) errors.push_back("data.dev must be >= 1");
  if (test_size < 1) errors.push_back("data.test must be >= 1");
  if (model.embed_dim < 1) errors.push_back("model.embed_dim must be >= 1");
  if (model.hidden_dim < 1) errors.push_back("model.hidden_dim must be >= 1");
  if (model.layers < 1) errors.push_back("model.layers must be >= 1");
  if (model.heads < 1 || (model.embed_dim >= 1 && model.embed_dim % std::max(1, model.heads) != 0)) {
    errors.push_back("model.heads must divide model.embed_dim");
  }
  const int cap = resolve_cap(static_cast<std::size_t>(std::max(task.max_length, 0)), max_length);
  if (model.max_positions < std::max(cap, task.max_length + 1) + 1) {
    errors.push_back("model.max_positions must exceed the decoding cap (" + std::to_string(cap) + ")");
  }
  check_train(teacher, "teacher", errors);
  check_train(kd, "kd", errors);
  check_train(il.train, "il.train", errors);
  if (bsr_beam < 1) errors.push_back("decode.bsr_beam must be >= 1");
  if (beam < 1) errors.push_back("decode.beam must be >= 1");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) errors.push_back("decode.gamma must be a finite value >= 0");
  if (max_length < 0) errors.push_back("decode.max_length must be >= 0");
  if (!(il.mix_p >= 0.0 && il.mix_p <= 1.0)) errors.push_back("il.mix_p must lie in [0, 1]");
  QConfig qc = q;
  qc.target_gamma = gamma;
  try {
    qc.validate();
  } catch (const ConfigError& e) {
    errors.push_back(e.what());
  }
  if (q.start_gamma > gamma) errors.push_back("q.start_gamma must not exceed decode.gamma");
  if (q_init != "pf" && q_init != "random") errors.push_back("q.init must be 'pf' or 'random'");
  if (q_dev_size < 1) errors.push_back("q.dev_size must be >= 1");
  if (seeds.empty()) errors.push_back("seeds must not be empty");
  if (threads < 1) errors.push_back("threads must be >= 1");
  if (output_dir.empty()) errors.push_back("output_dir must not be empty");
  if (speed.repetitions < 3) errors.push_back("bench.repetitions must be >= 3");
  if (speed.max_budget < 1) errors.push_back("bench.max_budget must be >= 1");
  for (int b : bench_bsr_beams) {
    if (b < 1) errors.push_back("bench.bsr_beams entries must be >= 1");
  }
  if (errors.empty()) return;
  std::string msg = "invalid config:";
  for (const auto& e : errors) msg += "\n  - " + e;
  throw ConfigError(msg);
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["task"] = {{"kind", to_string(c.task.kind)},
               {"vocab_size", c.task.vocab_size},
               {"min_length", c.task.min_length},
               {"max_length", c.task.max_length},
               {"noise", c.task.noise},
               {"homophone_fraction", c.task.homophone_fraction},
               {"homophone_rate", c.task.homophone_rate},
               {"seed", c.task.seed}};
  j["data"] = {{"train", c.train_size}, {"dev", c.dev_size}, {"test", c.test_size}};
  j["model"] = {{"embed_dim", c.model.embed_dim},
                {"hidden_dim", c.model.hidden_dim},
                {"layers", c.model.layers},
                {"heads", c.model.heads},
                {"max_positions", c.model.max_positions}};
  j["teacher"] = train_json(c.teacher);
  j["decode"] = {{"bsr_beam", c.bsr_beam}, {"gamma", c.gamma}, {"beam", c.beam}, {"max_length", c.max_length}};
  j["kd"] = train_json(c.kd);
  j["il"] = {{"mix_p", c.il.mix_p}, {"train", train_json(c.il.train)}};
  j["q"] = {{"init", c.q_init},
            {"dev_size", c.q_dev_size},
            {"start_gamma", c.q.start_gamma},
            {"gamma_step", c.q.gamma_step},
            {"sync_period", c.q.sync_period},
            {"learning_rate", c.q.learning_rate},
            {"weight_decay", c.q.weight_decay},
            {"accumulate", c.q.accumulate},
            {"buffer_capacity", c.q.buffer_capacity},
            {"batch_transitions", c.q.batch_transitions},
            {"collect_per_round", c.q.collect_per_round},
            {"updates_per_round", c.q.updates_per_round},
            {"eval_interval", c.q.eval_interval},
            {"patience", c.q.patience},
            {"max_updates", c.q.max_updates},
            {"beam50", c.q.beam50},
            {"include_gold", c.q.include_gold},
            {"gold_rate", c.q.gold_rate}};
  j["bench"] = {{"repetitions", c.speed.repetitions},
                {"max_budget", c.speed.max_budget},
                {"probe_size", c.speed.probe_size},
                {"bsr_beams", c.bench_bsr_beams}};
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir.string();
  j["threads"] = c.threads;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  Fields top(j, "");
  std::string base = "desk";
  top.read("preset", base);
  ExperimentConfig c = preset(base);
  top.read("name", c.name);
  if (const json* t = top.child("task")) {
    Fields f(*t, "task");
    std::string kind = to_string(c.task.kind);
    f.read("kind", kind);
    c.task.kind = parse_task_kind(kind);
    f.read("vocab_size", c.task.vocab_size);
    f.read("min_length", c.task.min_length);
    f.read("max_length", c.task.max_length);
    f.read("noise", c.task.noise);
    f.read("homophone_fraction", c.task.homophone_fraction);
    f.read("homophone_rate", c.task.homophone_rate);
    f.read("seed", c.task.seed);
    f.finish();
  }
  if (const json* d = top.child("data")) {
    Fields f(*d, "data");
    f.read("train", c.train_size);
    f.read("dev", c.dev_size);
    f.read("test", c.test_size);
    f.finish();
  }
  if (const json* m = top.child("model")) {
    Fields f(*m, "model");
    f.read("embed_dim", c.model.embed_dim);
    f.read("hidden_dim", c.model.hidden_dim);
    f.read("layers", c.model.layers);
    f.read("heads", c.model.heads);
    f.read("max_positions", c.model.max_positions);
    f.finish();
  }
  if (const json* t = top.child("teacher")) read_train(*t, "teacher", c.teacher);
  if (const json* d = top.child("decode")) {
    Fields f(*d, "decode");
    f.read("bsr_beam", c.bsr_beam);
    f.read("gamma", c.gamma);
    f.read("beam", c.beam);
    f.read("max_length", c.max_length);
    f.finish();
  }
  if (const json* k = top.child("kd")) read_train(*k, "kd", c.kd);
  if (const json* i = top.child("il")) {
    Fields f(*i, "il");
    f.read("mix_p", c.il.mix_p);
    if (const json* t = f.child("train")) read_train(*t, "il.train", c.il.train);
    f.finish();
  }
  if (const json* q = top.child("q")) {
    Fields f(*q, "q");
    f.read("init", c.q_init);
    f.read("dev_size", c.q_dev_size);
    f.read("start_gamma", c.q.start_gamma);
    f.read("gamma_step", c.q.gamma_step);
    f.read("sync_period", c.q.sync_period);
    f.read("learning_rate", c.q.learning_rate);
    f.read("weight_decay", c.q.weight_decay);
    f.read("accumulate", c.q.accumulate);
    f.read("buffer_capacity", c.q.buffer_capacity);
    f.read("batch_transitions", c.q.batch_transitions);
    f.read("collect_per_round", c.q.collect_per_round);
    f.read("updates_per_round", c.q.updates_per_round);
    f.read("eval_interval", c.q.eval_interval);
    f.read("patience", c.q.patience);
    f.read("max_updates", c.q.max_updates);
    f.read("beam50", c.q.beam50);
    f.read("include_gold", c.q.include_gold);
    f.read("gold_rate", c.q.gold_rate);
    f.finish();
  }
  if (const json* b = top.child("bench")) {
    Fields f(*b, "bench");
    f.read("repetitions", c.speed.repetitions);
    f.read("max_budget", c.speed.max_budget);
    f.read("probe_size", c.speed.probe_size);
    f.read("bsr_beams", c.bench_bsr_beams);
    f.finish();
  }
  top.read("seeds", c.seeds);
  std::string out = c.output_dir.string();
  top.read("output_dir", out);
  c.output_dir = out;
  top.read("threads", c.threads);
  top.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << to_json(config).dump(2) << "\n";
}

std::vector<std::string> sweep_grids() { return {"il_lr", "il_p", "q_lr", "q_sync", "q_accumulate"}; }

std::vector<ExperimentConfig> sweep(const ExperimentConfig& base, std::string_view grid) {
  std::vector<ExperimentConfig> out;
  auto add = [&](const std::string& label, auto&& set) {
    ExperimentConfig c = base;
    set(c);
    c.output_dir = base.output_dir / (std::string(grid) + "-" + label);
    out.push_back(std::move(c));
  };
  auto label = [](double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  };
  if (grid == "il_lr") {
    for (double lr : {1e-6, 5e-6, 1e-5, 3e-5, 5e-5}) add(label(lr), [lr](ExperimentConfig& c) { c.il.train.learning_rate = lr; });
  } else if (grid == "il_p") {
    for (double p : {0.0, 0.1, 0.5, 0.9, 1.0}) add(label(p), [p](ExperimentConfig& c) { c.il.mix_p = p; });
  } else if (grid == "q_lr") {
    for (double lr : {1e-5, 3e-5, 5e-5, 1e-4}) add(label(lr), [lr](ExperimentConfig& c) { c.q.learning_rate = lr; });
  } else if (grid == "q_sync") {
    for (int k : {10, 20, 30, 50, 150}) add(std::to_string(k), [k](ExperimentConfig& c) { c.q.sync_period = k; });
  } else if (grid == "q_accumulate") {
    for (int k : {4, 8, 16}) add(std::to_string(k), [k](ExperimentConfig& c) { c.q.accumulate = k; });
  } else {
    throw ConfigError("unknown sweep grid '" + std::string(grid) + "'");
  }
  return out;
}

void apply_env_overrides(ExperimentConfig& config) {
  if (const char* seeds = std::getenv("CHANMT_SEEDS"); seeds != nullptr && *seeds != '\0') {
    std::vector<std::uint64_t> parsed;
    std::stringstream ss(seeds);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t used = 0;
        parsed.push_back(std::stoull(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw ConfigError("CHANMT_SEEDS: '" + item + "' is not a seed");
      }
    }
    config.seeds = parsed;
  }
  if (const char* dir = std::getenv("CHANMT_OUTPUT_DIR"); dir != nullptr && *dir != '\0') config.output_dir = dir;
}

std::uint64_t ExperimentConfig::hash() const {
  json j = to_json(*this);
  j.erase("seeds");
  j.erase("output_dir");
  j.erase("threads");
  return fnv1a(j.dump());
}

bool ExperimentConfig::operator==(const ExperimentConfig& other) const { return to_json(*this) == to_json(other); }

}  // namespace chanmt
