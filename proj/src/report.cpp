#include <fstream>
#include <iomanip>

#include <json.hpp>

#include "chanmt/error.hpp"
#include "chanmt/eval.hpp"

namespace chanmt {

namespace {

using nlohmann::json;

json stat_json(const MeanStd& s) { return {{"mean", s.mean}, {"std", s.std}, {"n", s.n}}; }

MeanStd stat_from(const json& j) { return {j.at("mean").get<double>(), j.at("std").get<double>(), j.at("n").get<std::size_t>()}; }

double finite_hi(double v) { return std::isfinite(v) ? v : -1.0; }

std::string bucket_label(const Bucket& b) {
  std::ostringstream out;
  out << "(" << b.lo << "," << (std::isfinite(b.hi) ? std::to_string(static_cast<long long>(b.hi)) : "inf") << "]";
  return out.str();
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IntegrityError("report: cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

}  // namespace

SystemMetrics system_metrics(const SystemOutput& output, std::span<const TokenSeq> references,
                             std::span<const double> forward, std::span<const double> reverse, double gamma,
                             std::span<const Bucket> buckets) {
  const std::size_t n = output.translations.size();
  if (output.sources.size() != n || references.size() != n || forward.size() != n || reverse.size() != n) {
    throw ContractError("system_metrics: inputs for '" + output.name + "' differ in size");
  }
  SystemMetrics m;
  m.name = output.name;
  m.sentences = n;
  m.forward = mean_std(forward);
  m.reverse = mean_std(reverse);
  std::vector<double> totals(n);
  for (std::size_t i = 0; i < n; ++i) totals[i] = forward[i] + gamma * reverse[i];
  m.total = mean_std(totals);
  m.bleu = corpus_bleu(output.translations, references);
  m.token_rep = token_rep(output.translations);
  std::vector<std::size_t> lengths(n);
  double len = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    lengths[i] = output.sources[i].size();
    const auto& y = output.translations[i];
    len += static_cast<double>(y.size() - (!y.empty() && y.back() == kEos ? 1 : 0));
  }
  m.mean_length = n == 0 ? 0.0 : len / static_cast<double>(n);
  m.buckets = bucket_stats(output.translations, lengths, buckets);
  return m;
}

const SystemMetrics& MetricsReport::system(std::string_view name) const {
  for (const auto& s : systems) {
    if (s.name == name) return s;
  }
  throw ContractError("report: no system named '" + std::string(name) + "'");
}

void write_report(const std::filesystem::path& dir, const MetricsReport& report) {
  std::filesystem::create_directories(dir);
  json j;
  j["gamma"] = report.gamma;
  j["threads"] = report.threads;
  auto& systems = j["systems"] = json::array();
  for (const auto& s : report.systems) {
    json e{{"name", s.name},
           {"sentences", s.sentences},
           {"forward", stat_json(s.forward)},
           {"reverse", stat_json(s.reverse)},
           {"total", stat_json(s.total)},
           {"bleu", s.bleu},
           {"token_rep", s.token_rep},
           {"mean_length", s.mean_length}};
    e["sequences_per_second"] = s.sequences_per_second ? json(*s.sequences_per_second) : json(nullptr);
    auto& bs = e["buckets"] = json::array();
    for (const auto& b : s.buckets) {
      bs.push_back({{"lo", b.bucket.lo},
                    {"hi", finite_hi(b.bucket.hi)},
                    {"count", b.count},
                    {"mean_length", b.mean_length},
                    {"token_rep", b.token_rep}});
    }
    systems.push_back(std::move(e));
  }
  j["pairwise_bleu"] = {{"systems", report.pairwise.systems}, {"matrix", report.pairwise.matrix}};
  open_out(dir / "metrics.json") << j.dump(2) << "\n";

  auto csv = open_out(dir / "systems.csv");
  csv << "system,sentences,forward_mean,forward_std,reverse_mean,reverse_std,total_mean,total_std,bleu,token_rep,"
         "mean_length,sequences_per_second\n";
  for (const auto& s : report.systems) {
    csv << s.name << ',' << s.sentences << ',' << s.forward.mean << ',' << s.forward.std << ',' << s.reverse.mean
        << ',' << s.reverse.std << ',' << s.total.mean << ',' << s.total.std << ',' << s.bleu << ',' << s.token_rep
        << ',' << s.mean_length << ',';
    if (s.sequences_per_second) csv << *s.sequences_per_second;
    csv << '\n';
  }

  auto bk = open_out(dir / "buckets.csv");
  bk << "system,bucket,count,mean_length,token_rep\n";
  for (const auto& s : report.systems) {
    for (const auto& b : s.buckets) {
      bk << s.name << ",\"" << bucket_label(b.bucket) << "\"," << b.count << ',' << b.mean_length << ','
         << b.token_rep << '\n';
    }
  }

  for (const auto& [file, field] : {std::pair{"bucket_length.csv", 0}, std::pair{"bucket_token_rep.csv", 1}}) {
    auto out = open_out(dir / file);
    out << "bucket";
    for (const auto& s : report.systems) out << ',' << s.name;
    out << '\n';
    const std::size_t rows = report.systems.empty() ? 0 : report.systems.front().buckets.size();
    for (std::size_t r = 0; r < rows; ++r) {
      out << '"' << bucket_label(report.systems.front().buckets[r].bucket) << '"';
      for (const auto& s : report.systems) {
        out << ',' << (field == 0 ? s.buckets.at(r).mean_length : s.buckets.at(r).token_rep);
      }
      out << '\n';
    }
  }

  auto pw = open_out(dir / "pairwise.csv");
  pw << "system";
  for (const auto& n : report.pairwise.systems) pw << ',' << n;
  pw << '\n';
  for (std::size_t i = 0; i < report.pairwise.systems.size(); ++i) {
    pw << report.pairwise.systems[i];
    for (double v : report.pairwise.matrix[i]) pw << ',' << v;
    pw << '\n';
  }
}

MetricsReport read_report(const std::filesystem::path& dir) {
  const auto path = dir / "metrics.json";
  std::ifstream in(path);
  if (!in) throw IntegrityError("report: cannot read " + path.string());
  try {
    const json j = json::parse(in);
    MetricsReport r;
    r.gamma = j.at("gamma").get<double>();
    r.threads = j.at("threads").get<int>();
    for (const auto& e : j.at("systems")) {
      SystemMetrics s;
      s.name = e.at("name").get<std::string>();
      s.sentences = e.at("sentences").get<std::size_t>();
      s.forward = stat_from(e.at("forward"));
      s.reverse = stat_from(e.at("reverse"));
      s.total = stat_from(e.at("total"));
      s.bleu = e.at("bleu").get<double>();
      s.token_rep = e.at("token_rep").get<double>();
      s.mean_length = e.at("mean_length").get<double>();
      if (!e.at("sequences_per_second").is_null()) s.sequences_per_second = e.at("sequences_per_second").get<double>();
      for (const auto& b : e.at("buckets")) {
        BucketStat st;
        st.bucket.lo = b.at("lo").get<double>();
        const double hi = b.at("hi").get<double>();
        st.bucket.hi = hi < 0.0 ? std::numeric_limits<double>::infinity() : hi;
        st.count = b.at("count").get<std::size_t>();
        st.mean_length = b.at("mean_length").get<double>();
        st.token_rep = b.at("token_rep").get<double>();
        s.buckets.push_back(st);
      }
      r.systems.push_back(std::move(s));
    }
    r.pairwise.systems = j.at("pairwise_bleu").at("systems").get<std::vector<std::string>>();
    r.pairwise.matrix = j.at("pairwise_bleu").at("matrix").get<std::vector<std::vector<double>>>();
    return r;
  } catch (const json::exception& e) {
    throw IntegrityError("report: corrupt " + path.string() + ": " + e.what());
  }
}

}  // namespace chanmt
