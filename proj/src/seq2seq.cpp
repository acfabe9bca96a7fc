#include "chanmt/seq2seq.hpp"

#include <cmath>
#include <cstring>

#include "chanmt/error.hpp"

namespace chanmt {

using ad::Matrix;
using ad::Var;

// ---------------------------------------------------------------------------
// Config and layout

void ModelConfig::validate() const {
  auto need = [](bool ok, const char* field) {
    if (!ok) throw ConfigError(std::string("model config: invalid ") + field);
  };
  need(src_vocab > kReservedTokens, "src_vocab");
  need(tgt_vocab > kReservedTokens, "tgt_vocab");
  need(embed_dim > 0, "embed_dim");
  need(hidden_dim > 0, "hidden_dim");
  need(layers > 0, "layers");
  need(heads > 0 && embed_dim % heads == 0, "heads");
  need(max_positions > 1, "max_positions");
}

std::string ModelConfig::first_difference(const ModelConfig& o) const {
  if (src_vocab != o.src_vocab) return "src_vocab";
  if (tgt_vocab != o.tgt_vocab) return "tgt_vocab";
  if (embed_dim != o.embed_dim) return "embed_dim";
  if (hidden_dim != o.hidden_dim) return "hidden_dim";
  if (layers != o.layers) return "layers";
  if (heads != o.heads) return "heads";
  if (max_positions != o.max_positions) return "max_positions";
  return {};
}

namespace detail {

Layout make_layout(const ModelConfig& c) {
  Layout l;
  auto add = [&l](std::string name, int rows, int cols) {
    l.names.push_back(std::move(name));
    l.shapes.emplace_back(rows, cols);
    return static_cast<int>(l.names.size() - 1);
  };
  const int d = c.embed_dim;
  auto attention = [&](const std::string& p) {
    AttentionIdx a{};
    a.wq = add(p + ".wq", d, d);
    a.bq = add(p + ".bq", 1, d);
    a.wk = add(p + ".wk", d, d);
    a.bk = add(p + ".bk", 1, d);
    a.wv = add(p + ".wv", d, d);
    a.bv = add(p + ".bv", 1, d);
    a.wo = add(p + ".wo", d, d);
    a.bo = add(p + ".bo", 1, d);
    return a;
  };
  auto norm = [&](const std::string& p) { return NormIdx{add(p + ".gain", 1, d), add(p + ".bias", 1, d)}; };
  auto ffn = [&](const std::string& p) {
    FeedForwardIdx f{};
    f.w1 = add(p + ".w1", d, c.hidden_dim);
    f.b1 = add(p + ".b1", 1, c.hidden_dim);
    f.w2 = add(p + ".w2", c.hidden_dim, d);
    f.b2 = add(p + ".b2", 1, d);
    return f;
  };
  l.src_embed = add("src_embed", c.src_vocab, d);
  l.tgt_embed = add("tgt_embed", c.tgt_vocab, d);
  for (int i = 0; i < c.layers; ++i) {
    const std::string p = "enc" + std::to_string(i);
    EncoderLayerIdx e{};
    e.ln1 = norm(p + ".ln1");
    e.self = attention(p + ".self");
    e.ln2 = norm(p + ".ln2");
    e.ffn = ffn(p + ".ffn");
    l.encoder.push_back(e);
  }
  l.encoder_norm = norm("enc.norm");
  for (int i = 0; i < c.layers; ++i) {
    const std::string p = "dec" + std::to_string(i);
    DecoderLayerIdx e{};
    e.ln1 = norm(p + ".ln1");
    e.self = attention(p + ".self");
    e.ln2 = norm(p + ".ln2");
    e.cross = attention(p + ".cross");
    e.ln3 = norm(p + ".ln3");
    e.ffn = ffn(p + ".ffn");
    l.decoder.push_back(e);
  }
  l.decoder_norm = norm("dec.norm");
  l.out_w = add("out.w", d, c.tgt_vocab);
  l.out_b = add("out.b", 1, c.tgt_vocab);
  return l;
}

}  // namespace detail

namespace {

Matrix sinusoid_table(int positions, int dim) {
  Matrix pe(positions, dim);
  for (int p = 0; p < positions; ++p) {
    for (int i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -2.0 * (i / 2) / static_cast<double>(dim));
      pe(p, i) = (i % 2 == 0) ? std::sin(p * rate) : std::cos(p * rate);
    }
  }
  return pe;
}

bool is_norm_gain(const std::string& name) { return name.size() > 5 && name.ends_with(".gain"); }

}  // namespace

Seq2SeqModel::Seq2SeqModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  layout_ = detail::make_layout(config_);
  positions_ = sinusoid_table(config_.max_positions, config_.embed_dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < layout_.names.size(); ++i) {
    const auto [rows, cols] = layout_.shapes[i];
    const std::string& name = layout_.names[i];
    Matrix m = Matrix::Zero(rows, cols);
    if (is_norm_gain(name)) {
      m.setOnes();
    } else if (name == "src_embed" || name == "tgt_embed") {
      const double sd = 1.0 / std::sqrt(static_cast<double>(config_.embed_dim));
      for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = sd * normal(rng);
    } else if (rows > 1) {
      const double sd = std::sqrt(2.0 / static_cast<double>(rows + cols));
      for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = sd * normal(rng);
    }
    params_.push_back(std::move(m));
  }
}

Seq2SeqModel::Seq2SeqModel(const ModelConfig& config, std::vector<Matrix> parameters)
    : config_(config), params_(std::move(parameters)) {
  config_.validate();
  layout_ = detail::make_layout(config_);
  positions_ = sinusoid_table(config_.max_positions, config_.embed_dim);
  if (params_.size() != layout_.shapes.size()) {
    throw ContractError("model: parameter count does not match the config");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].rows() != layout_.shapes[i].first || params_[i].cols() != layout_.shapes[i].second) {
      throw ContractError("model: shape mismatch for parameter " + layout_.names[i]);
    }
  }
}

std::size_t Seq2SeqModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.size());
  return n;
}

std::uint64_t Seq2SeqModel::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  const int fields[] = {config_.src_vocab, config_.tgt_vocab, config_.embed_dim, config_.hidden_dim,
                        config_.layers,    config_.heads,     config_.max_positions};
  mix(fields, sizeof(fields));
  for (const auto& p : params_) mix(p.data(), static_cast<std::size_t>(p.size()) * sizeof(double));
  return h;
}

void Seq2SeqModel::check_finite() const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].allFinite()) {
      throw ContractError("model: non-finite values in " + layout_.names[i]);
    }
  }
}

SoftSeq SoftSeq::one_hot(std::span<const TokenId> ids, std::size_t vocab_size) {
  SoftSeq s;
  s.rows = Matrix::Zero(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(vocab_size));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab_size) {
      throw ContractError("soft sequence: token id out of range");
    }
    s.rows(static_cast<Eigen::Index>(i), ids[i]) = 1.0;
  }
  return s;
}

void check_soft_seq(const Matrix& rows, std::size_t vocab_size) {
  if (static_cast<std::size_t>(rows.cols()) != vocab_size) {
    throw ContractError("soft sequence: row width differs from the vocabulary size");
  }
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    if (!rows.row(r).allFinite() || rows.row(r).minCoeff() < 0.0 || std::abs(rows.row(r).sum() - 1.0) > 1e-9) {
      throw ContractError("soft sequence: row " + std::to_string(r) + " is not a probability distribution");
    }
  }
}

// ---------------------------------------------------------------------------
// Tape path

BoundModel bind_model(ad::Tape& tape, const Seq2SeqModel& model, std::vector<Matrix>* grads) {
  if (grads != nullptr && grads->size() != model.parameters().size()) {
    throw ContractError("bind: gradient buffer count differs from parameter count");
  }
  BoundModel b;
  b.model = &model;
  b.p.reserve(model.parameters().size());
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    b.p.push_back(tape.parameter(model.parameters()[i], grads != nullptr ? &(*grads)[i] : nullptr));
  }
  return b;
}

namespace {

double embed_scale(const Seq2SeqModel& m) { return std::sqrt(static_cast<double>(m.config().embed_dim)); }

void check_positions(const Seq2SeqModel& m, Eigen::Index n) {
  if (n > m.config().max_positions) {
    throw CapacityError("sequence of length " + std::to_string(n) + " exceeds max positions " +
                        std::to_string(m.config().max_positions));
  }
}

Var add_positions(const BoundModel& m, Var x) {
  check_positions(*m.model, x.rows());
  Var pos = x.tape()->constant(m.model->positions().topRows(x.rows()));
  return ad::add(x, pos);
}

std::vector<int> as_int(std::span<const TokenId> ids) { return {ids.begin(), ids.end()}; }

Var attention_block(const BoundModel& m, const detail::AttentionIdx& a, Var queries_from, Var keys_from,
                    bool causal) {
  const auto& p = m.p;
  Var q = ad::affine(queries_from, p[a.wq], p[a.bq]);
  Var k = ad::affine(keys_from, p[a.wk], p[a.bk]);
  Var v = ad::affine(keys_from, p[a.wv], p[a.bv]);
  Var ctx = ad::multihead_attention(q, k, v, m.model->config().heads, causal);
  return ad::affine(ctx, p[a.wo], p[a.bo]);
}

Var feed_forward(const BoundModel& m, const detail::FeedForwardIdx& f, Var x) {
  const auto& p = m.p;
  return ad::affine(ad::relu(ad::affine(x, p[f.w1], p[f.b1])), p[f.w2], p[f.b2]);
}

Var norm(const BoundModel& m, const detail::NormIdx& n, Var x) {
  return ad::layer_norm(x, m.p[n.gain], m.p[n.bias]);
}

Var drop(Var x, const Dropout& d) {
  if (d.rate <= 0.0 || d.rng == nullptr) return x;
  return ad::dropout(x, d.rate, *d.rng);
}

}  // namespace

Var embed_source(const BoundModel& m, std::span<const TokenId> ids) {
  const auto ints = as_int(ids);
  Var e = ad::gather_rows(m.p[m.model->layout().src_embed], ints);
  return add_positions(m, ad::scale(e, embed_scale(*m.model)));
}

Var embed_source_soft(const BoundModel& m, Var rows) {
  Var e = ad::matmul(rows, m.p[m.model->layout().src_embed]);
  return add_positions(m, ad::scale(e, embed_scale(*m.model)));
}

Var embed_target(const BoundModel& m, std::span<const TokenId> ids) {
  const auto ints = as_int(ids);
  Var e = ad::gather_rows(m.p[m.model->layout().tgt_embed], ints);
  return add_positions(m, ad::scale(e, embed_scale(*m.model)));
}

Var embed_target_soft(const BoundModel& m, Var rows) {
  Var e = ad::matmul(rows, m.p[m.model->layout().tgt_embed]);
  return add_positions(m, ad::scale(e, embed_scale(*m.model)));
}

Var encode(const BoundModel& m, Var embedded, const Dropout& dropout) {
  const auto& l = m.model->layout();
  Var x = drop(embedded, dropout);
  for (const auto& layer : l.encoder) {
    Var h = norm(m, layer.ln1, x);
    x = ad::add(x, drop(attention_block(m, layer.self, h, h, false), dropout));
    h = norm(m, layer.ln2, x);
    x = ad::add(x, drop(feed_forward(m, layer.ffn, h), dropout));
  }
  return norm(m, l.encoder_norm, x);
}

Var decode(const BoundModel& m, Var memory, Var embedded_inputs, const Dropout& dropout) {
  const auto& l = m.model->layout();
  Var x = drop(embedded_inputs, dropout);
  for (const auto& layer : l.decoder) {
    Var h = norm(m, layer.ln1, x);
    x = ad::add(x, drop(attention_block(m, layer.self, h, h, true), dropout));
    h = norm(m, layer.ln2, x);
    x = ad::add(x, drop(attention_block(m, layer.cross, h, memory, false), dropout));
    h = norm(m, layer.ln3, x);
    x = ad::add(x, drop(feed_forward(m, layer.ffn, h), dropout));
  }
  x = norm(m, l.decoder_norm, x);
  return ad::affine(x, m.p[l.out_w], m.p[l.out_b]);
}

TokenSeq shift_right(std::span<const TokenId> target) {
  TokenSeq in;
  in.reserve(target.size());
  in.push_back(kBos);
  for (std::size_t i = 0; i + 1 < target.size(); ++i) in.push_back(target[i]);
  return in;
}

Var teacher_forced_scores(const BoundModel& m, std::span<const TokenId> source, std::span<const TokenId> target,
                          const Dropout& dropout) {
  if (source.empty() || target.empty()) {
    throw ContractError("teacher forcing: empty source or target");
  }
  check_token_seq(source, static_cast<std::size_t>(m.model->config().src_vocab));
  check_token_seq(target, static_cast<std::size_t>(m.model->config().tgt_vocab));
  Var memory = encode(m, embed_source(m, source), dropout);
  const TokenSeq inputs = shift_right(target);
  return decode(m, memory, embed_target(m, inputs), dropout);
}

Var soft_forward(const BoundModel& m, std::span<const TokenId> source, Var soft_rows) {
  const auto vocab = static_cast<std::size_t>(m.model->config().tgt_vocab);
  check_soft_seq(soft_rows.value(), vocab);
  if (source.empty() || soft_rows.rows() == 0) {
    throw ContractError("soft_forward: empty source or soft target");
  }
  ad::Tape& tape = *soft_rows.tape();
  Var memory = encode(m, embed_source(m, source));
  Matrix bos = Matrix::Zero(1, static_cast<Eigen::Index>(vocab));
  bos(0, kBos) = 1.0;
  std::vector<Var> parts{tape.constant(std::move(bos))};
  if (soft_rows.rows() > 1) parts.push_back(ad::slice_rows(soft_rows, 0, soft_rows.rows() - 1));
  Var inputs = ad::concat_rows(parts);
  return ad::log_softmax_rows(decode(m, memory, embed_target_soft(m, inputs)));
}

Var soft_source_forward(const BoundModel& m, Var soft_source_rows, std::span<const TokenId> target) {
  check_soft_seq(soft_source_rows.value(), static_cast<std::size_t>(m.model->config().src_vocab));
  if (soft_source_rows.rows() == 0 || target.empty()) {
    throw ContractError("soft_source_forward: empty soft source or target");
  }
  check_token_seq(target, static_cast<std::size_t>(m.model->config().tgt_vocab));
  Var memory = encode(m, embed_source_soft(m, soft_source_rows));
  const TokenSeq inputs = shift_right(target);
  return ad::log_softmax_rows(decode(m, memory, embed_target(m, inputs)));
}

// ---------------------------------------------------------------------------
// Incremental path

namespace {

Matrix attention_plain(const Seq2SeqModel& model, const detail::AttentionIdx& a, const Matrix& queries_from,
                       const Matrix& keys_from, bool causal) {
  const auto& p = model.parameters();
  Matrix q = ad::kernel::affine(queries_from, p[a.wq], p[a.bq]);
  Matrix k = ad::kernel::affine(keys_from, p[a.wk], p[a.bk]);
  Matrix v = ad::kernel::affine(keys_from, p[a.wv], p[a.bv]);
  Matrix ctx = ad::kernel::multihead_attention(q, k, v, model.config().heads, causal);
  return ad::kernel::affine(ctx, p[a.wo], p[a.bo]);
}

Matrix norm_plain(const Seq2SeqModel& model, const detail::NormIdx& n, const Matrix& x) {
  return ad::kernel::layer_norm(x, model.parameters()[n.gain], model.parameters()[n.bias]);
}

Matrix feed_forward_plain(const Seq2SeqModel& model, const detail::FeedForwardIdx& f, const Matrix& x) {
  const auto& p = model.parameters();
  return ad::kernel::affine(ad::kernel::relu(ad::kernel::affine(x, p[f.w1], p[f.b1])), p[f.w2], p[f.b2]);
}

Matrix encode_plain(const Seq2SeqModel& model, Matrix x) {
  const auto& l = model.layout();
  for (const auto& layer : l.encoder) {
    Matrix h = norm_plain(model, layer.ln1, x);
    x = x + attention_plain(model, layer.self, h, h, false);
    h = norm_plain(model, layer.ln2, x);
    x = x + feed_forward_plain(model, layer.ffn, h);
  }
  return norm_plain(model, l.encoder_norm, x);
}

}  // namespace

Matrix encode_source(const Seq2SeqModel& model, std::span<const TokenId> source) {
  if (source.empty()) {
    throw ContractError("encode: empty source");
  }
  check_token_seq(source, static_cast<std::size_t>(model.config().src_vocab));
  const auto n = static_cast<Eigen::Index>(source.size());
  check_positions(model, n);
  const Matrix& table = model.parameters()[model.layout().src_embed];
  Matrix e(n, table.cols());
  for (Eigen::Index i = 0; i < n; ++i) e.row(i) = table.row(source[static_cast<std::size_t>(i)]);
  Matrix x = e * embed_scale(model);
  x = x + model.positions().topRows(n);
  return encode_plain(model, std::move(x));
}

Matrix encode_soft_source(const Seq2SeqModel& model, const Matrix& rows) {
  check_soft_seq(rows, static_cast<std::size_t>(model.config().src_vocab));
  if (rows.rows() == 0) {
    throw ContractError("encode: empty soft source");
  }
  check_positions(model, rows.rows());
  Matrix e(rows.rows(), model.config().embed_dim);
  e.noalias() = rows * model.parameters()[model.layout().src_embed];
  Matrix x = e * embed_scale(model);
  x = x + model.positions().topRows(rows.rows());
  return encode_plain(model, std::move(x));
}

DecoderState::DecoderState(const Seq2SeqModel& model, Matrix memory, std::size_t hypotheses)
    : model_(&model), memory_(std::move(memory)) {
  if (hypotheses == 0) {
    throw ContractError("decoder state: needs at least one hypothesis");
  }
  const auto& l = model.layout();
  const auto& p = model.parameters();
  for (const auto& layer : l.decoder) {
    cross_k_.push_back(ad::kernel::affine(memory_, p[layer.cross.wk], p[layer.cross.bk]));
    cross_v_.push_back(ad::kernel::affine(memory_, p[layer.cross.wv], p[layer.cross.bv]));
  }
  const auto d = static_cast<Eigen::Index>(model.config().embed_dim);
  self_k_.assign(l.decoder.size(), std::vector<Matrix>(hypotheses, Matrix(0, d)));
  self_v_.assign(l.decoder.size(), std::vector<Matrix>(hypotheses, Matrix(0, d)));
  const Matrix& table = p[l.tgt_embed];
  Matrix e(static_cast<Eigen::Index>(hypotheses), d);
  for (Eigen::Index i = 0; i < e.rows(); ++i) e.row(i) = table.row(kBos);
  Matrix x = e * embed_scale(model);
  x.rowwise() += model.positions().row(0);
  step(x);
}

void DecoderState::step(const Matrix& embedded) {
  const Seq2SeqModel& model = *model_;
  const auto& l = model.layout();
  const auto& p = model.parameters();
  const int heads = model.config().heads;
  Matrix x = embedded;
  const auto n = x.rows();
  for (std::size_t li = 0; li < l.decoder.size(); ++li) {
    const auto& layer = l.decoder[li];
    Matrix h = norm_plain(model, layer.ln1, x);
    Matrix q = ad::kernel::affine(h, p[layer.self.wq], p[layer.self.bq]);
    Matrix k = ad::kernel::affine(h, p[layer.self.wk], p[layer.self.bk]);
    Matrix v = ad::kernel::affine(h, p[layer.self.wv], p[layer.self.bv]);
    Matrix ctx(n, q.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      Matrix& kc = self_k_[li][static_cast<std::size_t>(i)];
      Matrix& vc = self_v_[li][static_cast<std::size_t>(i)];
      kc.conservativeResize(kc.rows() + 1, Eigen::NoChange);
      vc.conservativeResize(vc.rows() + 1, Eigen::NoChange);
      kc.row(kc.rows() - 1) = k.row(i);
      vc.row(vc.rows() - 1) = v.row(i);
      Matrix qi = q.row(i);
      ctx.row(i) = ad::kernel::multihead_attention(qi, kc, vc, heads, false);
    }
    x = x + ad::kernel::affine(ctx, p[layer.self.wo], p[layer.self.bo]);
    h = norm_plain(model, layer.ln2, x);
    Matrix cq = ad::kernel::affine(h, p[layer.cross.wq], p[layer.cross.bq]);
    Matrix cctx = ad::kernel::multihead_attention(cq, cross_k_[li], cross_v_[li], heads, false);
    x = x + ad::kernel::affine(cctx, p[layer.cross.wo], p[layer.cross.bo]);
    h = norm_plain(model, layer.ln3, x);
    x = x + feed_forward_plain(model, layer.ffn, h);
  }
  x = norm_plain(model, l.decoder_norm, x);
  scores_ = ad::kernel::affine(x, p[l.out_w], p[l.out_b]);
}

std::vector<double> DecoderState::log_probs(std::size_t h) const {
  const Matrix row = scores_.row(static_cast<Eigen::Index>(h));
  const Matrix lp = ad::kernel::log_softmax_rows(row);
  return {lp.data(), lp.data() + lp.size()};
}

void DecoderState::advance(std::span<const std::size_t> parents, std::span<const TokenId> tokens) {
  if (parents.size() != tokens.size() || parents.empty()) {
    throw ContractError("decoder state: parents and tokens must be non-empty and equally long");
  }
  const Seq2SeqModel& model = *model_;
  const int position = length_ + 1;
  if (position >= model.config().max_positions) {
    throw CapacityError("decoder prefix exceeds max positions " + std::to_string(model.config().max_positions));
  }
  const std::size_t old_n = hypotheses();
  const bool identity = parents.size() == old_n && [&] {
    for (std::size_t i = 0; i < parents.size(); ++i)
      if (parents[i] != i) return false;
    return true;
  }();
  if (!identity) {
    for (std::size_t li = 0; li < self_k_.size(); ++li) {
      std::vector<Matrix> nk, nv;
      nk.reserve(parents.size());
      nv.reserve(parents.size());
      for (std::size_t par : parents) {
        if (par >= old_n) throw ContractError("decoder state: parent index out of range");
        nk.push_back(self_k_[li][par]);
        nv.push_back(self_v_[li][par]);
      }
      self_k_[li] = std::move(nk);
      self_v_[li] = std::move(nv);
    }
  }
  const Matrix& table = model.parameters()[model.layout().tgt_embed];
  Matrix e(static_cast<Eigen::Index>(tokens.size()), table.cols());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= table.rows()) throw ContractError("decoder state: token out of range");
    e.row(static_cast<Eigen::Index>(i)) = table.row(tokens[i]);
  }
  Matrix x = e * embed_scale(model);
  x.rowwise() += model.positions().row(position);
  step(x);
  length_ = position;
}

void DecoderState::advance(TokenId token) {
  if (hypotheses() != 1) {
    throw ContractError("decoder state: single-token advance on a multi-hypothesis state");
  }
  const std::size_t parent = 0;
  advance(std::span<const std::size_t>(&parent, 1), std::span<const TokenId>(&token, 1));
}

std::vector<double> next_token_log_probs(const Seq2SeqModel& model, std::span<const TokenId> source,
                                         std::span<const TokenId> prefix) {
  for (TokenId t : prefix) {
    if (t == kEos) throw ContractError("next_token_log_probs: prefix contains EOS");
  }
  check_token_seq(prefix, static_cast<std::size_t>(model.config().tgt_vocab));
  if (static_cast<int>(prefix.size()) + 1 > model.config().max_positions) {
    throw CapacityError("next_token_log_probs: prefix exceeds max positions");
  }
  DecoderState state(model, encode_source(model, source));
  for (TokenId t : prefix) state.advance(t);
  return state.log_probs(0);
}

std::vector<double> token_log_probs(const Seq2SeqModel& model, std::span<const TokenId> source,
                                    std::span<const TokenId> target) {
  if (target.empty() || target.back() != kEos) {
    throw ContractError("token_log_probs: target must end with EOS");
  }
  check_token_seq(target, static_cast<std::size_t>(model.config().tgt_vocab));
  DecoderState state(model, encode_source(model, source));
  std::vector<double> out;
  out.reserve(target.size());
  for (std::size_t t = 0; t < target.size(); ++t) {
    out.push_back(state.log_probs(0)[static_cast<std::size_t>(target[t])]);
    if (t + 1 < target.size()) state.advance(target[t]);
  }
  return out;
}

double sequence_log_prob(const Seq2SeqModel& model, std::span<const TokenId> source, std::span<const TokenId> target) {
  double total = 0.0;
  for (double lp : token_log_probs(model, source, target)) total += lp;
  return total;
}

Matrix soft_forward(const Seq2SeqModel& model, std::span<const TokenId> source, const SoftSeq& soft_target) {
  ad::Tape tape;
  BoundModel m = bind_model(tape, model, nullptr);
  Var rows = tape.constant(soft_target.rows);
  return soft_forward(m, source, rows).value();
}

std::vector<double> soft_source_forward(const Seq2SeqModel& model, const SoftSeq& soft_source,
                                        std::span<const TokenId> target_prefix) {
  for (TokenId t : target_prefix) {
    if (t == kEos) throw ContractError("soft_source_forward: prefix contains EOS");
  }
  DecoderState state(model, encode_soft_source(model, soft_source.rows));
  for (TokenId t : target_prefix) state.advance(t);
  return state.log_probs(0);
}

}  // namespace chanmt
