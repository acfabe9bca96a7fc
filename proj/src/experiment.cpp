#include <chrono>
#include <fstream>
#include <iterator>
#include <ostream>

#include "chanmt/checkpoint.hpp"
#include "chanmt/decode.hpp"
#include "chanmt/error.hpp"
#include "chanmt/experiment.hpp"
#include "chanmt/hash.hpp"
#include "chanmt/parallel.hpp"

namespace chanmt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

enum Role : std::uint64_t { kForwardRole = 1, kReverseRole, kKdNcRole, kKdBeamRole, kIlRole, kQRole };

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t role) { return seed * 1000003ULL + role * 7919ULL; }

std::uint64_t file_checksum(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a(bytes);
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IntegrityError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IntegrityError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IntegrityError("corrupt " + path.string() + ": " + e.what());
  }
}

json history_json(const TrainResult& r) {
  json h = json::array();
  for (const auto& e : r.history) {
    h.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_bleu", e.dev_bleu}, {"dev_loss", e.dev_loss}});
  }
  return {{"best_epoch", r.best_epoch}, {"best_dev_bleu", r.best_dev_bleu}, {"initial_loss", r.initial_loss},
          {"history", h}};
}

struct Data {
  std::vector<TextPair> train_text, dev_text, test_text;
  Vocab src, tgt;
  std::vector<ParallelPair> train, dev, test;
  std::vector<TokenSeq> train_sources, dev_sources, test_sources, test_references;
};

Data make_data(const ExperimentConfig& c) {
  Data d;
  const auto corpus = generate_corpus(c.task, c.train_size + c.dev_size + c.test_size);
  const std::size_t sizes[] = {c.train_size, c.dev_size, c.test_size};
  auto parts = split_pairs(corpus.pairs, sizes);
  d.train_text = std::move(parts[0]);
  d.dev_text = std::move(parts[1]);
  d.test_text = std::move(parts[2]);
  d.src = build_vocab(d.train_text, Side::kSource);
  d.tgt = build_vocab(d.train_text, Side::kTarget);
  d.train = encode_pairs(d.train_text, d.src, d.tgt);
  d.dev = encode_pairs(d.dev_text, d.src, d.tgt);
  d.test = encode_pairs(d.test_text, d.src, d.tgt);
  for (const auto& p : d.train) d.train_sources.push_back(p.source);
  for (const auto& p : d.dev) d.dev_sources.push_back(p.source);
  for (const auto& p : d.test) {
    d.test_sources.push_back(p.source);
    d.test_references.push_back(p.target);
  }
  return d;
}

std::vector<ParallelPair> reversed(std::span<const ParallelPair> pairs) {
  std::vector<ParallelPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({p.target, eos_terminated(p.source)});
  return out;
}

ModelConfig model_config(const ExperimentConfig& c, const Data& d, bool reverse) {
  ModelConfig m;
  m.src_vocab = static_cast<int>(reverse ? d.tgt.size() : d.src.size());
  m.tgt_vocab = static_cast<int>(reverse ? d.src.size() : d.tgt.size());
  m.embed_dim = c.model.embed_dim;
  m.hidden_dim = c.model.hidden_dim;
  m.layers = c.model.layers;
  m.heads = c.model.heads;
  m.max_positions = c.model.max_positions;
  return m;
}

class SeedRun {
 public:
  SeedRun(const ExperimentConfig& c, std::uint64_t seed, const RunOptions& opts, RunOutcome& outcome)
      : c_(c), seed_(seed), opts_(opts), outcome_(outcome), paths_(seed_paths(c, seed)), hash_(c.hash()) {
    for (const auto& p : {paths_.reports, paths_.checkpoints, paths_.translations, paths_.corpora}) {
      std::error_code ec;
      fs::create_directories(p, ec);
      if (ec) throw ConfigError("output_dir: cannot create " + p.string() + ": " + ec.message());
    }
    manifest_path_ = paths_.reports / "manifest.json";
    if (fs::exists(manifest_path_)) {
      try {
        manifest_ = read_json(manifest_path_);
      } catch (const IntegrityError&) {
        manifest_ = json::object();
      }
    }
    if (!manifest_.is_object() || manifest_.value("config_hash", "") != hex64(hash_)) manifest_ = json::object();
    manifest_["config_hash"] = hex64(hash_);
    manifest_["seed"] = seed_;
    if (!manifest_.contains("stages")) manifest_["stages"] = json::object();
    manifest_.erase("failed");
    data_ = make_data(c_);
  }

  void run(Stage stage) {
    const std::string name = to_string(stage);
    const auto start = Clock::now();
    const auto inputs = input_files(stage);
    for (const auto& f : inputs) {
      if (!fs::exists(f)) fail(stage, StageError("stage " + name + " needs " + f.string() + "; run its producer first"));
    }
    std::string key_text = hex64(hash_) + ":" + std::to_string(seed_) + ":" + name;
    for (const auto& f : inputs) key_text += ":" + hex64(file_checksum(f));
    const std::string key = hex64(fnv1a(key_text));
    bool skipped = false;
    if (!opts_.force && up_to_date(name, key)) {
      skipped = true;
      if (stage == Stage::kEval) report_ = read_report(paths_.reports);
    } else {
      say("[seed " + std::to_string(seed_) + "] " + name);
      std::vector<fs::path> outputs;
      try {
        outputs = execute(stage);
      } catch (const IntegrityError& e) {
        fail(stage, e);
      } catch (const ConfigError& e) {
        fail(stage, e);
      } catch (const StageError& e) {
        fail(stage, e);
      } catch (const std::exception& e) {
        fail(stage, StageError("stage " + name + " failed: " + e.what()));
      }
      json outs = json::object();
      for (const auto& f : outputs) outs[fs::relative(f, c_.output_dir).generic_string()] = hex64(file_checksum(f));
      manifest_["stages"][name] = {{"key", key}, {"outputs", outs}};
      save_manifest();
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    outcome_.stages.push_back({seed_, stage, skipped, secs});
    if (skipped) say("[seed " + std::to_string(seed_) + "] " + name + " up to date");
  }

  std::optional<MetricsReport> report() const { return report_; }

 private:
  fs::path ckpt(const std::string& role) const { return paths_.checkpoints / (role + ".ckpt"); }
  fs::path translation(const std::string& system) const { return paths_.translations / (system + ".json"); }

  std::vector<fs::path> input_files(Stage stage) const {
    switch (stage) {
      case Stage::kTrainTeachers:
        return {};
      case Stage::kPseudo:
        return {ckpt("pf"), ckpt("pr")};
      case Stage::kKd:
        return {paths_.corpora / "pseudo_bsr.tgt", paths_.corpora / "pseudo_beam.tgt"};
      case Stage::kIl:
        return {ckpt("pf"), ckpt("pr"), ckpt("kd_nc"), paths_.corpora / "pseudo_bsr.tgt"};
      case Stage::kQ:
        return {ckpt("pf"), ckpt("pr")};
      case Stage::kDecode:
      case Stage::kBench: {
        std::vector<fs::path> in{ckpt("pf"), ckpt("pr")};
        for (const char* r : {"kd_nc", "kd_beam", "il", "q"}) {
          if (fs::exists(ckpt(r))) in.push_back(ckpt(r));
        }
        return in;
      }
      case Stage::kEval: {
        std::vector<fs::path> in{ckpt("pf"), ckpt("pr")};
        for (const auto& s : system_names()) {
          if (fs::exists(translation(s))) in.push_back(translation(s));
        }
        if (fs::exists(paths_.reports / "speed.json")) in.push_back(paths_.reports / "speed.json");
        return in;
      }
    }
    return {};
  }

  bool up_to_date(const std::string& name, const std::string& key) const {
    const auto& stages = manifest_["stages"];
    if (!stages.contains(name) || stages[name].value("key", "") != key) return false;
    for (const auto& [rel, sum] : stages[name]["outputs"].items()) {
      const fs::path f = c_.output_dir / rel;
      if (!fs::exists(f) || hex64(file_checksum(f)) != sum.get<std::string>()) return false;
    }
    return true;
  }

  [[noreturn]] void fail(Stage stage, const Error& e) {
    manifest_["failed"] = {{"stage", to_string(stage)}, {"error", e.what()}};
    manifest_["stages"].erase(to_string(stage));
    save_manifest();
    if (dynamic_cast<const IntegrityError*>(&e)) throw IntegrityError(e.what());
    if (dynamic_cast<const ConfigError*>(&e)) throw ConfigError(e.what());
    throw StageError(e.what());
  }

  void save_manifest() const { write_json(manifest_path_, manifest_); }

  void say(const std::string& line) const {
    if (opts_.log != nullptr) *opts_.log << line << std::endl;
  }

  Checkpoint make_ckpt(const std::string& role, const Seq2SeqModel& model, bool reverse) const {
    Checkpoint k;
    k.role = role;
    k.config_hash = hash_;
    k.seed = seed_;
    k.source_vocab = reverse ? data_.tgt : data_.src;
    k.target_vocab = reverse ? data_.src : data_.tgt;
    k.model = model;
    return k;
  }

  Seq2SeqModel load_model(const std::string& role, bool reverse = false) const {
    const ModelConfig expected = model_config(c_, data_, reverse);
    return load_checkpoint(ckpt(role), &expected).model;
  }

  TrainOptions options(TrainOptions o, Role role) const {
    o.seed = derive_seed(seed_, role);
    o.threads = c_.threads;
    return o;
  }

  std::vector<fs::path> execute(Stage stage) {
    switch (stage) {
      case Stage::kTrainTeachers:
        return train_teachers();
      case Stage::kPseudo:
        return pseudo();
      case Stage::kKd:
        return kd();
      case Stage::kIl:
        return il();
      case Stage::kQ:
        return q();
      case Stage::kDecode:
        return decode();
      case Stage::kEval:
        return eval();
      case Stage::kBench:
        return bench();
    }
    return {};
  }

  std::vector<fs::path> train_teachers() {
    std::vector<fs::path> out;
    for (const auto& [name, text] : {std::pair{"train", &data_.train_text}, std::pair{"dev", &data_.dev_text},
                                     std::pair{"test", &data_.test_text}}) {
      const auto s = paths_.corpora / (std::string(name) + ".src");
      const auto t = paths_.corpora / (std::string(name) + ".tgt");
      write_parallel_text(s, t, *text);
      out.push_back(s);
      out.push_back(t);
    }
    const auto fwd_cfg = model_config(c_, data_, false);
    const auto rev_cfg = model_config(c_, data_, true);
    const auto pf = train_mle(Seq2SeqModel(fwd_cfg, derive_seed(seed_, kForwardRole)), data_.train, data_.dev,
                              options(c_.teacher, kForwardRole));
    const auto rev_train = reversed(data_.train);
    const auto rev_dev = reversed(data_.dev);
    const auto pr = train_mle(Seq2SeqModel(rev_cfg, derive_seed(seed_, kReverseRole)), rev_train, rev_dev,
                              options(c_.teacher, kReverseRole));
    save_checkpoint(ckpt("pf"), make_ckpt("pf", pf.model, false));
    save_checkpoint(ckpt("pr"), make_ckpt("pr", pr.model, true));
    write_json(paths_.reports / "train_teachers.json", {{"pf", history_json(pf)}, {"pr", history_json(pr)}});
    out.insert(out.end(), {ckpt("pf"), ckpt("pr"), paths_.reports / "train_teachers.json"});
    return out;
  }

  std::vector<fs::path> pseudo() {
    const auto pf = load_model("pf");
    const auto pr = load_model("pr", true);
    std::vector<fs::path> out;
    const auto nc = generate_pseudo_corpus(pf, &pr, data_.train_sources, c_.bsr_beam, c_.gamma, PseudoMode::kBsr,
                                           c_.threads, c_.max_length);
    save_pseudo_corpus(paths_.corpora / "pseudo_bsr", nc, data_.src, data_.tgt);
    const auto beam = generate_pseudo_corpus(pf, nullptr, data_.train_sources, c_.beam, c_.gamma, PseudoMode::kBeam,
                                             c_.threads, c_.max_length);
    save_pseudo_corpus(paths_.corpora / "pseudo_beam", beam, data_.src, data_.tgt);
    for (const char* stem : {"pseudo_bsr", "pseudo_beam"}) {
      for (const char* ext : {".src", ".tgt", ".json"}) out.push_back(paths_.corpora / (std::string(stem) + ext));
    }
    return out;
  }

  std::vector<fs::path> kd() {
    const auto cfg = model_config(c_, data_, false);
    json log;
    for (const auto& [role, stem, r] : {std::tuple{"kd_nc", "pseudo_bsr", kKdNcRole},
                                        std::tuple{"kd_beam", "pseudo_beam", kKdBeamRole}}) {
      const auto corpus = load_pseudo_corpus(paths_.corpora / stem, data_.src, data_.tgt);
      const auto res = train_mle(Seq2SeqModel(cfg, derive_seed(seed_, r)), corpus.pairs, data_.dev, options(c_.kd, r));
      save_checkpoint(ckpt(role), make_ckpt(role, res.model, false));
      log[role] = history_json(res);
    }
    write_json(paths_.reports / "kd.json", log);
    return {ckpt("kd_nc"), ckpt("kd_beam"), paths_.reports / "kd.json"};
  }

  std::vector<fs::path> il() {
    const auto pf = load_model("pf");
    const auto pr = load_model("pr", true);
    const auto init = load_model("kd_nc");
    const auto corpus = load_pseudo_corpus(paths_.corpora / "pseudo_bsr", data_.src, data_.tgt);
    ILConfig ic = c_.il;
    ic.gamma = c_.gamma;
    ic.max_length = c_.max_length;
    ic.train = options(ic.train, kIlRole);
    const auto res = train_il(init, pf, pr, corpus.pairs, data_.dev, ic);
    save_checkpoint(ckpt("il"), make_ckpt("il", res.model, false));
    write_json(paths_.reports / "il.json", history_json(res));
    return {ckpt("il"), paths_.reports / "il.json"};
  }

  std::vector<fs::path> q() {
    const auto pf = load_model("pf");
    const auto pr = load_model("pr", true);
    QConfig qc = c_.q;
    qc.target_gamma = c_.gamma;
    qc.max_length = c_.max_length;
    qc.seed = derive_seed(seed_, kQRole);
    qc.threads = c_.threads;
    const std::size_t ndev = std::min(c_.q_dev_size, data_.dev_sources.size());
    const std::span<const TokenSeq> dev(data_.dev_sources.data(), ndev);
    const Seq2SeqModel init =
        c_.q_init == "pf" ? pf : Seq2SeqModel(model_config(c_, data_, false), derive_seed(seed_, kQRole));
    const auto res = train_q(init, pf, pr, data_.train_sources, dev, qc);
    save_checkpoint(ckpt("q"), make_ckpt("q", res.model, false));
    json h = json::array();
    for (const auto& e : res.history) {
      h.push_back({{"update", e.update}, {"gamma", e.gamma}, {"dev_reward", e.dev_reward}, {"loss", e.loss}});
    }
    write_json(paths_.reports / "q.json", {{"best_update", res.best_update},
                                           {"best_dev_reward", res.best_dev_reward},
                                           {"syncs", res.syncs},
                                           {"gammas", res.gammas_visited},
                                           {"history", h}});
    return {ckpt("q"), paths_.reports / "q.json"};
  }

  struct Decoder {
    std::string system;
    std::vector<std::string> checksums;
    json params;
    std::function<TokenSeq(const TokenSeq&)> run;
  };

  struct Models {
    Seq2SeqModel pf, pr;
    std::map<std::string, Seq2SeqModel> students;
  };

  Models load_models() const {
    Models m{load_model("pf"), load_model("pr", true), {}};
    for (const char* r : {"kd_nc", "kd_beam", "il", "q"}) {
      if (fs::exists(ckpt(r))) m.students.emplace(r, load_model(r));
    }
    return m;
  }

  std::vector<Decoder> decoders(const Models& m, bool with_bench_beams) const {
    const int cap = c_.max_length;
    const auto pf_sum = hex64(m.pf.checksum());
    const auto pr_sum = hex64(m.pr.checksum());
    std::vector<Decoder> out;
    out.push_back({"greedy_pf", {pf_sum}, {{"kind", "greedy"}, {"max_length", cap}}, [&m, cap](const TokenSeq& x) {
                     return complete_target(greedy_decode(ModelScorer(m.pf, ScorerRole::kProbability), x, cap));
                   }});
    out.push_back({"beam_pf", {pf_sum}, {{"kind", "beam"}, {"beam", c_.beam}, {"max_length", cap}},
                   [&m, cap, b = c_.beam](const TokenSeq& x) { return complete_target(beam_search(m.pf, x, b, cap).front()); }});
    auto bsr = [&](int b) {
      return Decoder{b == c_.bsr_beam ? "bsr" : "bsr_b" + std::to_string(b),
                     {pf_sum, pr_sum},
                     {{"kind", "bsr"}, {"beam", b}, {"gamma", c_.gamma}, {"max_length", cap}},
                     [&m, cap, b, g = c_.gamma](const TokenSeq& x) {
                       return complete_target(bsr_decode(m.pf, m.pr, x, b, g, cap).best);
                     }};
    };
    out.push_back(bsr(c_.bsr_beam));
    for (const auto& [role, model] : m.students) {
      const bool value = role == "q";
      const Seq2SeqModel* mp = &model;
      out.push_back({role,
                     {hex64(model.checksum())},
                     {{"kind", value ? "greedy_q" : "greedy"}, {"max_length", cap}},
                     [mp, cap, value](const TokenSeq& x) {
                       return complete_target(value ? greedy_decode_q(*mp, x, cap)
                                                    : greedy_decode(ModelScorer(*mp, ScorerRole::kProbability), x, cap));
                     }});
    }
    if (with_bench_beams) {
      for (int b : c_.bench_bsr_beams) {
        if (b != c_.bsr_beam) out.push_back(bsr(b));
      }
    }
    return out;
  }

  std::vector<fs::path> decode() {
    const Models m = load_models();
    std::vector<fs::path> out;
    for (const auto& d : decoders(m, false)) {
      TranslationFile f;
      f.system = d.system;
      f.seed = seed_;
      f.config_hash = hash_;
      f.model_checksums = d.checksums;
      f.decode = d.params;
      f.sources = data_.test_sources;
      f.translations.resize(f.sources.size());
      parallel_for(f.sources.size(), c_.threads, [&](std::size_t i) { f.translations[i] = d.run(f.sources[i]); });
      save_translations(translation(d.system), f);
      out.push_back(translation(d.system));
    }
    return out;
  }

  std::vector<fs::path> eval() {
    const auto pf = load_model("pf");
    const auto pr = load_model("pr", true);
    std::map<std::string, double> speeds;
    if (fs::exists(paths_.reports / "speed.json")) {
      const json speed = read_json(paths_.reports / "speed.json");
      for (const auto& e : speed.at("decoders")) {
        speeds[e.at("name").get<std::string>()] = e.at("sequences_per_second").get<double>();
      }
    }
    MetricsReport report;
    report.gamma = c_.gamma;
    report.threads = c_.threads;
    std::vector<SystemOutput> outputs;
    const auto buckets = default_buckets();
    for (const auto& s : system_names()) {
      if (!fs::exists(translation(s))) continue;
      const auto f = load_translations(translation(s));
      if (f.sources != data_.test_sources) throw IntegrityError("translations of " + s + " do not match the test set");
      std::vector<double> fwd(f.sources.size()), rev(f.sources.size());
      parallel_for(f.sources.size(), c_.threads, [&](std::size_t i) {
        const auto r = total_reward(pf, pr, f.sources[i], f.translations[i], c_.gamma);
        fwd[i] = r.forward;
        rev[i] = r.reverse;
      });
      SystemOutput o{s, f.sources, f.translations};
      auto m = system_metrics(o, data_.test_references, fwd, rev, c_.gamma, buckets);
      if (auto it = speeds.find(s); it != speeds.end()) m.sequences_per_second = it->second;
      report.systems.push_back(std::move(m));
      outputs.push_back(std::move(o));
    }
    if (outputs.empty()) throw StageError("eval: no translations found; run the decode stage first");
    report.pairwise = pairwise_bleu(outputs);
    write_report(paths_.reports, report);
    report_ = read_report(paths_.reports);
    std::vector<fs::path> out;
    for (const char* f : {"metrics.json", "systems.csv", "buckets.csv", "pairwise.csv", "bucket_length.csv",
                          "bucket_token_rep.csv"}) {
      out.push_back(paths_.reports / f);
    }
    return out;
  }

  std::vector<fs::path> bench() {
    const Models m = load_models();
    std::vector<DecoderUnderTest> list;
    for (auto& d : decoders(m, true)) list.push_back({d.system, d.run});
    SpeedOptions so = c_.speed;
    so.threads = c_.threads;
    const auto results = speed_benchmark(list, data_.test_sources, so);
    json arr = json::array();
    for (const auto& r : results) {
      arr.push_back({{"name", r.name},
                     {"budget", r.budget},
                     {"threads", r.threads},
                     {"runs", r.runs},
                     {"sequences_per_second", r.sequences_per_second}});
    }
    write_json(paths_.reports / "speed.json", {{"deterministic", false}, {"decoders", arr}});
    return {paths_.reports / "speed.json"};
  }

  const ExperimentConfig& c_;
  std::uint64_t seed_;
  const RunOptions& opts_;
  RunOutcome& outcome_;
  SeedPaths paths_;
  std::uint64_t hash_;
  fs::path manifest_path_;
  json manifest_ = json::object();
  Data data_;
  std::optional<MetricsReport> report_;
};

}  // namespace

std::vector<std::string> system_names() {
  return {"greedy_pf", "beam_pf", "bsr", "kd_nc", "kd_beam", "il", "q"};
}

SeedPaths seed_paths(const ExperimentConfig& config, std::uint64_t seed) {
  const std::string dir = "seed-" + std::to_string(seed);
  return {config.output_dir / "reports" / dir, config.output_dir / "checkpoints" / dir,
          config.output_dir / "translations" / dir, config.output_dir / "corpora" / dir};
}

void save_translations(const fs::path& path, const TranslationFile& f) {
  json j{{"system", f.system},
         {"seed", f.seed},
         {"config_hash", hex64(f.config_hash)},
         {"model_checksums", f.model_checksums},
         {"decode", f.decode},
         {"sources", f.sources},
         {"translations", f.translations}};
  write_json(path, j);
}

TranslationFile load_translations(const fs::path& path) {
  const json j = read_json(path);
  try {
    TranslationFile f;
    f.system = j.at("system").get<std::string>();
    f.seed = j.at("seed").get<std::uint64_t>();
    f.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    f.model_checksums = j.at("model_checksums").get<std::vector<std::string>>();
    f.decode = j.at("decode");
    f.sources = j.at("sources").get<std::vector<TokenSeq>>();
    f.translations = j.at("translations").get<std::vector<TokenSeq>>();
    if (f.sources.size() != f.translations.size()) throw IntegrityError("translations " + path.string() + ": misaligned");
    return f;
  } catch (const json::exception& e) {
    throw IntegrityError("translations " + path.string() + ": " + e.what());
  }
}

std::vector<SeedSummary> summarize(std::span<const MetricsReport> reports) {
  std::vector<SeedSummary> out;
  for (const auto& name : system_names()) {
    SeedSummary s;
    s.system = name;
    for (const auto& r : reports) {
      for (const auto& m : r.systems) {
        if (m.name != name) continue;
        s.forward.push_back(m.forward.mean);
        s.reverse.push_back(m.reverse.mean);
        s.total.push_back(m.total.mean);
        s.bleu.push_back(m.bleu);
      }
    }
    if (!s.forward.empty()) out.push_back(std::move(s));
  }
  return out;
}

void write_summary(const fs::path& path, std::span<const SeedSummary> summary) {
  json arr = json::array();
  auto block = [](const std::vector<double>& v) {
    const auto ms = mean_std(v);
    return json{{"per_seed", v}, {"median", median(v)}, {"mean", ms.mean}, {"std", ms.std}};
  };
  for (const auto& s : summary) {
    arr.push_back({{"system", s.system},
                   {"forward", block(s.forward)},
                   {"reverse", block(s.reverse)},
                   {"total", block(s.total)},
                   {"bleu", block(s.bleu)}});
  }
  write_json(path, {{"systems", arr}});
}

RunOutcome run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  RunOutcome outcome;
  outcome.seeds = config.seeds;
  std::vector<Stage> stages;
  for (Stage s : all_stages()) {
    if (std::find(options.stages.begin(), options.stages.end(), s) != options.stages.end()) stages.push_back(s);
  }
  {
    std::error_code ec;
    fs::create_directories(config.output_dir / "reports", ec);
    if (ec) throw ConfigError("output_dir: cannot create " + config.output_dir.string() + ": " + ec.message());
    save_config(config.output_dir / "reports" / "config.json", config);
  }
  for (std::uint64_t seed : config.seeds) {
    SeedRun run(config, seed, options, outcome);
    for (Stage s : stages) run.run(s);
    if (auto r = run.report()) outcome.reports.push_back(*r);
  }
  if (!outcome.reports.empty()) {
    write_summary(config.output_dir / "reports" / "summary.json", summarize(outcome.reports));
  }
  return outcome;
}

}  // namespace chanmt
