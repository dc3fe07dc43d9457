#include "lenvae/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lenvae {

namespace {

std::string layer_prefix(std::size_t k) { return "dec.l" + std::to_string(k); }

/// Pointers into a model's ParamStore, resolved once per pass.
struct Net {
  Parameter* embedding;
  LstmParams enc_fwd, enc_bwd;
  Parameter *mu_w, *mu_b, *lv_w, *lv_b;
  Parameter* length_table;  // null without length embedding
  Parameter *init_w, *init_b;
  std::vector<LstmParams> dec;
  Parameter *out_w, *out_b;
  Parameter *bow_hw, *bow_hb, *bow_ow, *bow_ob;

  static Net bind(const VaeModel& model) {
    // Forward passes only read through these pointers; gradient writes
    // happen from forward_backward, which holds a mutable model.
    auto& store = const_cast<ParamStore&>(model.params);
    Net n;
    n.embedding = &store.at("embedding");
    n.enc_fwd = LstmParams::bind(store, "enc.fwd");
    n.enc_bwd = LstmParams::bind(store, "enc.bwd");
    n.mu_w = &store.at("latent.mu.w");
    n.mu_b = &store.at("latent.mu.b");
    n.lv_w = &store.at("latent.logvar.w");
    n.lv_b = &store.at("latent.logvar.b");
    n.length_table = model.hp.use_length_embedding
                         ? &store.at("length.table")
                         : nullptr;
    n.init_w = &store.at("dec.init.w");
    n.init_b = &store.at("dec.init.b");
    for (std::size_t k = 0; k < model.hp.decoder_layers; ++k)
      n.dec.push_back(LstmParams::bind(store, layer_prefix(k)));
    n.out_w = &store.at("out.w");
    n.out_b = &store.at("out.b");
    n.bow_hw = &store.at("bow.hidden.w");
    n.bow_hb = &store.at("bow.hidden.b");
    n.bow_ow = &store.at("bow.out.w");
    n.bow_ob = &store.at("bow.out.b");
    return n;
  }
};

Matrix gather_embeddings(const Parameter& table,
                         const std::vector<TokenId>& ids) {
  const auto table_m = table.value.matrix();
  Matrix x(table_m.cols(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t b = 0; b < ids.size(); ++b)
    x.col(static_cast<Eigen::Index>(b)) = table_m.row(ids[b]).transpose();
  return x;
}

void scatter_embedding_grads(Parameter& table, const std::vector<TokenId>& ids,
                             const Matrix& grads) {
  auto g = table.grad.matrix();
  for (std::size_t b = 0; b < ids.size(); ++b)
    g.row(ids[b]) += grads.col(static_cast<Eigen::Index>(b)).transpose();
}

std::size_t length_row(std::size_t remaining, std::size_t max_index) {
  return std::min(remaining, max_index);
}

Vector column_log_softmax(const Eigen::Ref<const Vector>& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

struct EncoderPass {
  std::size_t steps = 0;
  std::vector<std::vector<TokenId>> ids;  // per step
  Matrix mask;                            // steps x batch
  std::vector<LstmCache> fwd_cache, bwd_cache;
  Matrix mean;                            // 2H x B
};

EncoderPass run_encoder(const Net& net, const Batch& batch, bool keep_cache) {
  const auto B = static_cast<Eigen::Index>(batch.batch_size);
  const auto H = static_cast<Eigen::Index>(net.enc_fwd.hidden_size());
  EncoderPass pass;
  pass.steps = batch.max_length;
  pass.mask = Matrix::Zero(static_cast<Eigen::Index>(pass.steps), B);
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    if (batch.lengths[b] == 0) throw Error("cannot encode an empty sentence");
    for (std::size_t t = 0; t < batch.lengths[b]; ++t)
      pass.mask(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(b)) = 1.0;
  }
  pass.ids.resize(pass.steps);
  for (std::size_t t = 0; t < pass.steps; ++t)
    for (std::size_t b = 0; b < batch.batch_size; ++b)
      pass.ids[t].push_back(batch.token(b, t));
  if (keep_cache) {
    pass.fwd_cache.resize(pass.steps);
    pass.bwd_cache.resize(pass.steps);
  }

  Matrix sum = Matrix::Zero(2 * H, B);
  auto run_direction = [&](const LstmParams& params,
                           std::vector<LstmCache>& caches, bool reverse,
                           Eigen::Index row_offset) {
    Matrix h = Matrix::Zero(H, B);
    Matrix c = Matrix::Zero(H, B);
    for (std::size_t k = 0; k < pass.steps; ++k) {
      const std::size_t t = reverse ? pass.steps - 1 - k : k;
      const Matrix x = gather_embeddings(*net.embedding, pass.ids[t]);
      auto out = lstm_cell_forward(x, h, c, params,
                                   keep_cache ? &caches[t] : nullptr);
      const auto m = pass.mask.row(static_cast<Eigen::Index>(t));
      for (Eigen::Index b = 0; b < B; ++b) {
        if (m(b) == 0.0) {
          out.h.col(b) = h.col(b);
          out.c.col(b) = c.col(b);
        }
      }
      h = std::move(out.h);
      c = std::move(out.c);
      sum.middleRows(row_offset, H) += h * m.asDiagonal();
    }
  };
  run_direction(net.enc_fwd, pass.fwd_cache, false, 0);
  run_direction(net.enc_bwd, pass.bwd_cache, true, H);

  Vector inv_len(B);
  for (Eigen::Index b = 0; b < B; ++b)
    inv_len(b) = 1.0 / static_cast<double>(batch.lengths[static_cast<std::size_t>(b)]);
  pass.mean = sum * inv_len.asDiagonal();
  return pass;
}

void backprop_encoder(const Net& net, const Batch& batch,
                      const EncoderPass& pass, const Matrix& d_mean) {
  const auto B = static_cast<Eigen::Index>(batch.batch_size);
  const auto H = static_cast<Eigen::Index>(net.enc_fwd.hidden_size());
  Vector inv_len(B);
  for (Eigen::Index b = 0; b < B; ++b)
    inv_len(b) = 1.0 / static_cast<double>(batch.lengths[static_cast<std::size_t>(b)]);
  const Matrix d_states = d_mean * inv_len.asDiagonal();

  auto backprop_direction = [&](const LstmParams& params,
                                const std::vector<LstmCache>& caches,
                                bool reverse, Eigen::Index row_offset) {
    Matrix dh_carry = Matrix::Zero(H, B);
    Matrix dc_carry = Matrix::Zero(H, B);
    // Visit steps in the opposite order of the forward recursion.
    for (std::size_t k = 0; k < pass.steps; ++k) {
      const std::size_t t = reverse ? k : pass.steps - 1 - k;
      const auto m = pass.mask.row(static_cast<Eigen::Index>(t));
      const Matrix dh = dh_carry + d_states.middleRows(row_offset, H) * m.asDiagonal();
      const Matrix& dc = dc_carry;
      const Matrix dh_new = dh * m.asDiagonal();
      const Matrix dc_new = dc * m.asDiagonal();
      const Vector keep = (1.0 - m.array()).matrix().transpose();
      auto g = lstm_cell_backward(caches[t], dh_new, dc_new, params);
      dh_carry = g.h_prev + dh * keep.asDiagonal();
      dc_carry = g.c_prev + dc * keep.asDiagonal();
      scatter_embedding_grads(*net.embedding, pass.ids[t], g.input);
    }
  };
  backprop_direction(net.enc_fwd, pass.fwd_cache, false, 0);
  backprop_direction(net.enc_bwd, pass.bwd_cache, true, H);
}

LossBreakdown run_model(const VaeModel& model, const Batch& batch,
                        const LossOptions& options, RandomStream& rng,
                        bool backward) {
  const HyperParams& hp = model.hp;
  if (batch.vocab_size != hp.vocab_size)
    throw ShapeError("batch vocabulary size does not match the model");
  if (options.kl_weight < 0.0 || options.kl_weight > 1.0)
    throw Error("kl_weight must lie in [0, 1]");
  const Net net = Net::bind(model);
  const auto B = static_cast<Eigen::Index>(batch.batch_size);
  const auto H = static_cast<Eigen::Index>(hp.cell_size);
  const auto Z = static_cast<Eigen::Index>(hp.latent_size);
  const auto E = static_cast<Eigen::Index>(hp.embedding_size);
  const auto V = static_cast<Eigen::Index>(hp.vocab_size);
  const std::size_t layers = hp.decoder_layers;
  const double inv_b = 1.0 / static_cast<double>(B);
  const bool train = options.mode == Mode::kTrain;

  // Encoder and posterior.
  EncoderPass enc = run_encoder(net, batch, backward);
  Matrix mu = net.mu_w->value.matrix() * enc.mean;
  mu.colwise() += net.mu_b->value.vector();
  Matrix lv = net.lv_w->value.matrix() * enc.mean;
  lv.colwise() += net.lv_b->value.vector();

  Matrix eps;
  if (options.noise) {
    eps = *options.noise;
    if (eps.rows() != Z || eps.cols() != B)
      throw ShapeError("posterior noise must be latent_size x batch_size");
  } else {
    eps.resize(Z, B);
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index d = 0; d < Z; ++d) eps(d, b) = rng.normal();
  }
  const Matrix sigma = (0.5 * lv.array()).exp().matrix();
  const Matrix z = mu + sigma.cwiseProduct(eps);

  const Vector kl_per = kl_divergence({mu, lv});
  const double kl = kl_per.sum() * inv_b;

  // Bag-of-words head.
  Matrix bow_a = net.bow_hw->value.matrix() * z;
  bow_a.colwise() += net.bow_hb->value.vector();
  const Matrix bow_h = bow_a.array().tanh().matrix();
  Matrix bow_logits = net.bow_ow->value.matrix() * bow_h;
  bow_logits.colwise() += net.bow_ob->value.vector();
  double bow_sum = 0.0;
  Matrix d_bow_logits;
  if (backward) d_bow_logits = Matrix::Zero(V, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const Vector logp = column_log_softmax(bow_logits.col(b));
    double n = 0.0;
    for (auto [id, count] : batch.bags[static_cast<std::size_t>(b)]) {
      bow_sum -= count * logp(id);
      n += count;
    }
    if (backward) {
      d_bow_logits.col(b) = n * logp.array().exp().matrix() * inv_b;
      for (auto [id, count] : batch.bags[static_cast<std::size_t>(b)])
        d_bow_logits(id, b) -= count * inv_b;
    }
  }

  // Decoder.
  const std::size_t steps = batch.max_length + 1;
  std::vector<std::size_t> desired(batch.lengths);
  if (options.desired_lengths) {
    if (options.desired_lengths->size() != batch.batch_size)
      throw ShapeError("desired_lengths must have one entry per example");
    desired = *options.desired_lengths;
  }

  std::vector<Matrix> dropout(steps);
  const bool use_dropout = train && options.keep_rate < 1.0;
  if (use_dropout) {
    if (options.keep_rate <= 0.0) throw Error("keep_rate must be positive");
    for (auto& mask : dropout) {
      mask.resize(H, B);
      for (Eigen::Index b = 0; b < B; ++b)
        for (Eigen::Index r = 0; r < H; ++r)
          mask(r, b) = rng.bernoulli(options.keep_rate) ? 1.0 / options.keep_rate : 0.0;
    }
  }

  const std::size_t negatives = hp.effective_sample_count();
  const bool sampled = train && negatives + 1 < hp.vocab_size;

  std::vector<Matrix> h(layers), c(layers);
  for (std::size_t k = 0; k < layers; ++k) {
    h[k] = Matrix::Zero(H, B);
    c[k] = Matrix::Zero(H, B);
  }
  c[0] = net.init_w->value.matrix() * z;
  c[0].colwise() += net.init_b->value.vector();

  const auto Le = static_cast<Eigen::Index>(
      hp.use_length_embedding ? hp.length_embedding_size : 0);
  const Eigen::Index u_rows = E + Z + Le;

  std::vector<std::vector<LstmCache>> caches;
  std::vector<std::vector<TokenId>> prev_ids(steps);
  std::vector<std::vector<std::size_t>> len_rows(steps);
  std::vector<Matrix> d_top;
  if (backward) {
    caches.assign(steps, std::vector<LstmCache>(layers));
    d_top.resize(steps);
  }

  double recon_sum = 0.0;
  auto out_w = net.out_w->value.matrix();
  auto out_b = net.out_b->value.vector();

  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < batch.batch_size; ++b) {
      prev_ids[t].push_back(batch.decoder_input(b, t));
      const std::size_t remaining = desired[b] > t ? desired[b] - t : 0;
      len_rows[t].push_back(length_row(remaining, hp.max_length_index));
    }
    Matrix u(u_rows, B);
    u.topRows(E) = gather_embeddings(*net.embedding, prev_ids[t]);
    u.middleRows(E, Z) = z;
    if (Le > 0) {
      const auto table = net.length_table->value.matrix();
      for (Eigen::Index b = 0; b < B; ++b)
        u.block(E + Z, b, Le, 1) =
            table.row(static_cast<Eigen::Index>(len_rows[t][static_cast<std::size_t>(b)])).transpose();
    }
    for (std::size_t k = 0; k < layers; ++k) {
      Matrix input;
      if (k == 0) {
        input = u;
      } else {
        input.resize(H + u_rows, B);
        input.topRows(H) = h[k - 1];
        input.bottomRows(u_rows) = u;
      }
      auto out = lstm_cell_forward(input, h[k], c[k], net.dec[k],
                                   backward ? &caches[t][k] : nullptr);
      h[k] = std::move(out.h);
      c[k] = std::move(out.c);
    }
    const Matrix top = use_dropout ? Matrix(h[layers - 1].cwiseProduct(dropout[t]))
                                   : h[layers - 1];
    Matrix d_out;
    if (backward) d_out = Matrix::Zero(H, B);

    if (!sampled) {
      Matrix logits = out_w * top;
      logits.colwise() += out_b;
      for (Eigen::Index b = 0; b < B; ++b) {
        const auto bi = static_cast<std::size_t>(b);
        if (t > batch.lengths[bi]) continue;
        const TokenId y = batch.target(bi, t);
        const Vector logp = column_log_softmax(logits.col(b));
        recon_sum -= logp(y);
        if (backward) {
          Vector d = logp.array().exp().matrix() * inv_b;
          d(y) -= inv_b;
          net.out_w->grad.matrix().noalias() += d * top.col(b).transpose();
          net.out_b->grad.vector() += d;
          d_out.col(b) = out_w.transpose() * d;
        }
      }
    } else {
      for (Eigen::Index b = 0; b < B; ++b) {
        const auto bi = static_cast<std::size_t>(b);
        if (t > batch.lengths[bi]) continue;
        const TokenId y = batch.target(bi, t);
        const Vector hidden = top.col(b);
        auto result = sampled_softmax_loss(net.out_w->value, net.out_b->value,
                                           hidden, y, negatives, rng);
        recon_sum += result.loss;
        if (backward) {
          auto gw = net.out_w->grad.matrix();
          auto gb = net.out_b->grad.vector();
          for (std::size_t j = 0; j < result.classes.size(); ++j) {
            const double d = (result.probabilities[j] - (j == 0 ? 1.0 : 0.0)) * inv_b;
            const TokenId cls = result.classes[j];
            gw.row(cls) += d * hidden.transpose();
            gb(cls) += d;
            d_out.col(b) += d * out_w.row(cls).transpose();
          }
        }
      }
    }
    if (backward)
      d_top[t] = use_dropout ? Matrix(d_out.cwiseProduct(dropout[t])) : d_out;
  }

  LossBreakdown loss;
  loss.reconstruction = recon_sum * inv_b;
  loss.kl = kl;
  loss.bow = bow_sum * inv_b;
  loss.total = loss.reconstruction + options.kl_weight * loss.kl + loss.bow;
  if (!backward) return loss;

  // Decoder backward.
  Matrix dz = Matrix::Zero(Z, B);
  std::vector<Matrix> dh_carry(layers, Matrix::Zero(H, B));
  std::vector<Matrix> dc_carry(layers, Matrix::Zero(H, B));
  for (std::size_t k = steps; k-- > 0;) {
    const std::size_t t = k;
    Matrix du = Matrix::Zero(u_rows, B);
    Matrix from_above = d_top[t];
    for (std::size_t l = layers; l-- > 0;) {
      const Matrix dh = dh_carry[l] + from_above;
      auto g = lstm_cell_backward(caches[t][l], dh, dc_carry[l], net.dec[l]);
      dh_carry[l] = std::move(g.h_prev);
      dc_carry[l] = std::move(g.c_prev);
      if (l > 0) {
        from_above = g.input.topRows(H);
        du += g.input.bottomRows(u_rows);
      } else {
        du += g.input;
      }
    }
    scatter_embedding_grads(*net.embedding, prev_ids[t], du.topRows(E));
    dz += du.middleRows(E, Z);
    if (Le > 0) {
      auto table_grad = net.length_table->grad.matrix();
      for (Eigen::Index b = 0; b < B; ++b)
        table_grad.row(static_cast<Eigen::Index>(len_rows[t][static_cast<std::size_t>(b)])) +=
            du.block(E + Z, b, Le, 1).transpose();
    }
  }
  // Initial cell state of the first layer.
  net.init_w->grad.matrix().noalias() += dc_carry[0] * z.transpose();
  net.init_b->grad.vector() += dc_carry[0].rowwise().sum();
  dz.noalias() += net.init_w->value.matrix().transpose() * dc_carry[0];

  // Bag-of-words backward.
  net.bow_ow->grad.matrix().noalias() += d_bow_logits * bow_h.transpose();
  net.bow_ob->grad.vector() += d_bow_logits.rowwise().sum();
  const Matrix d_bow_a =
      (net.bow_ow->value.matrix().transpose() * d_bow_logits)
          .cwiseProduct((1.0 - bow_h.array().square()).matrix());
  net.bow_hw->grad.matrix().noalias() += d_bow_a * z.transpose();
  net.bow_hb->grad.vector() += d_bow_a.rowwise().sum();
  dz.noalias() += net.bow_hw->value.matrix().transpose() * d_bow_a;

  // Posterior backward.
  const double klw = options.kl_weight * inv_b;
  const Matrix d_mu = dz + klw * mu;
  const Matrix d_lv =
      dz.cwiseProduct(eps).cwiseProduct(0.5 * sigma) +
      klw * 0.5 * (lv.array().exp() - 1.0).matrix();
  net.mu_w->grad.matrix().noalias() += d_mu * enc.mean.transpose();
  net.mu_b->grad.vector() += d_mu.rowwise().sum();
  net.lv_w->grad.matrix().noalias() += d_lv * enc.mean.transpose();
  net.lv_b->grad.vector() += d_lv.rowwise().sum();
  const Matrix d_mean = net.mu_w->value.matrix().transpose() * d_mu +
                        net.lv_w->value.matrix().transpose() * d_lv;
  backprop_encoder(net, batch, enc, d_mean);
  return loss;
}

}  // namespace

void HyperParams::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw Error(std::string("hyperparameter '") + name + "' must be positive");
  };
  positive(vocab_size, "vocab_size");
  positive(cell_size, "cell_size");
  positive(embedding_size, "embedding_size");
  positive(latent_size, "latent_size");
  positive(bow_hidden_size, "bow_hidden_size");
  positive(length_embedding_size, "length_embedding_size");
  positive(decoder_layers, "decoder_layers");
  positive(max_length_index, "max_length_index");
  positive(sample_count, "sample_count");
  if (vocab_size < 2) throw Error("vocab_size must be at least 2");
}

std::size_t HyperParams::effective_sample_count() const {
  return std::min(sample_count, vocab_size - 1);
}

std::size_t HyperParams::decoder_input_size(std::size_t layer) const {
  return (layer > 0 ? cell_size : 0) + embedding_size + latent_size +
         (use_length_embedding ? length_embedding_size : 0);
}

HyperParams paper_hyperparams(std::size_t vocab_size) {
  HyperParams hp;
  hp.vocab_size = vocab_size;
  hp.cell_size = 243;
  hp.embedding_size = 254;
  hp.latent_size = 124;
  hp.bow_hidden_size = 236;
  hp.length_embedding_size = 50;
  hp.decoder_layers = 1;
  hp.max_length_index = 40;
  hp.sample_count = 1000;
  return hp;
}

VaeModel VaeModel::create(const HyperParams& hp, std::uint64_t seed,
                          double init_scale) {
  hp.validate();
  VaeModel model;
  model.hp = hp;
  auto& s = model.params;
  RandomStream rng(seed);
  auto uniform = [&](Parameter& p) {
    for (auto& v : p.value.values()) v = rng.uniform(-init_scale, init_scale);
  };

  uniform(s.add("embedding", {hp.vocab_size, hp.embedding_size}));
  init_lstm(LstmParams::create(s, "enc.fwd", hp.embedding_size, hp.cell_size),
            rng, init_scale);
  init_lstm(LstmParams::create(s, "enc.bwd", hp.embedding_size, hp.cell_size),
            rng, init_scale);
  uniform(s.add("latent.mu.w", {hp.latent_size, 2 * hp.cell_size}));
  s.add("latent.mu.b", {hp.latent_size});
  uniform(s.add("latent.logvar.w", {hp.latent_size, 2 * hp.cell_size}));
  s.add("latent.logvar.b", {hp.latent_size});
  if (hp.use_length_embedding)
    uniform(s.add("length.table",
                  {hp.max_length_index + 1, hp.length_embedding_size}));
  uniform(s.add("dec.init.w", {hp.cell_size, hp.latent_size}));
  s.add("dec.init.b", {hp.cell_size});
  for (std::size_t k = 0; k < hp.decoder_layers; ++k)
    init_lstm(LstmParams::create(s, layer_prefix(k), hp.decoder_input_size(k),
                                 hp.cell_size),
              rng, init_scale);
  uniform(s.add("out.w", {hp.vocab_size, hp.cell_size}));
  s.add("out.b", {hp.vocab_size});
  uniform(s.add("bow.hidden.w", {hp.bow_hidden_size, hp.latent_size}));
  s.add("bow.hidden.b", {hp.bow_hidden_size});
  uniform(s.add("bow.out.w", {hp.vocab_size, hp.bow_hidden_size}));
  s.add("bow.out.b", {hp.vocab_size});
  return model;
}

LatentParams encode(const VaeModel& model, const Batch& batch) {
  if (batch.vocab_size != model.hp.vocab_size)
    throw ShapeError("batch vocabulary size does not match the model");
  const Net net = Net::bind(model);
  const EncoderPass pass = run_encoder(net, batch, false);
  LatentParams latent;
  latent.mu = net.mu_w->value.matrix() * pass.mean;
  latent.mu.colwise() += net.mu_b->value.vector();
  latent.logvar = net.lv_w->value.matrix() * pass.mean;
  latent.logvar.colwise() += net.lv_b->value.vector();
  return latent;
}

Matrix reparameterize(const LatentParams& latent, const Matrix& noise) {
  if (noise.rows() != latent.mu.rows() || noise.cols() != latent.mu.cols())
    throw ShapeError("noise shape must match the posterior mean");
  return latent.mu +
         (0.5 * latent.logvar.array()).exp().matrix().cwiseProduct(noise);
}

Vector kl_divergence(const LatentParams& latent) {
  const auto& mu = latent.mu.array();
  const auto& lv = latent.logvar.array();
  return (0.5 * (mu.square() + lv.exp() - 1.0 - lv).colwise().sum())
      .transpose()
      .matrix();
}

Vector length_embed(const LengthSchedule& schedule, const VaeModel& model) {
  if (!model.hp.use_length_embedding) return Vector::Zero(0);
  const auto& table = model.params.at("length.table").value;
  const std::size_t row = length_row(schedule.current(), model.hp.max_length_index);
  return table.matrix().row(static_cast<Eigen::Index>(row)).transpose();
}

DecoderState initial_decoder_state(const VaeModel& model, const Vector& z) {
  const auto H = static_cast<Eigen::Index>(model.hp.cell_size);
  if (z.size() != static_cast<Eigen::Index>(model.hp.latent_size))
    throw ShapeError("latent vector has the wrong size");
  DecoderState state;
  state.h.assign(model.hp.decoder_layers, Vector::Zero(H));
  state.c.assign(model.hp.decoder_layers, Vector::Zero(H));
  state.c[0] = model.params.at("dec.init.w").value.matrix() * z +
               model.params.at("dec.init.b").value.vector();
  return state;
}

StepOutput decode_step(const VaeModel& model, const Vector& z,
                       TokenId previous_token, const LengthSchedule& schedule,
                       const DecoderState& state, Mode mode, double keep_rate,
                       RandomStream* rng) {
  const HyperParams& hp = model.hp;
  const Net net = Net::bind(model);
  if (z.size() != static_cast<Eigen::Index>(hp.latent_size))
    throw ShapeError("latent vector has the wrong size");
  if (state.h.size() != hp.decoder_layers || state.c.size() != hp.decoder_layers)
    throw ShapeError("decoder state has the wrong layer count");
  if (previous_token < 0 || static_cast<std::size_t>(previous_token) >= hp.vocab_size)
    throw Error("previous token outside the vocabulary");

  const auto E = static_cast<Eigen::Index>(hp.embedding_size);
  const auto Z = static_cast<Eigen::Index>(hp.latent_size);
  const auto H = static_cast<Eigen::Index>(hp.cell_size);
  const Vector len = length_embed(schedule, model);
  Vector u(E + Z + len.size());
  u.head(E) = net.embedding->value.matrix().row(previous_token).transpose();
  u.segment(E, Z) = z;
  u.tail(len.size()) = len;

  StepOutput out;
  out.state = state;
  for (std::size_t k = 0; k < hp.decoder_layers; ++k) {
    Matrix input;
    if (k == 0) {
      input = u;
    } else {
      input.resize(H + u.size(), 1);
      input.topRows(H) = out.state.h[k - 1];
      input.bottomRows(u.size()) = u;
    }
    auto step = lstm_cell_forward(input, state.h[k], state.c[k], net.dec[k]);
    out.state.h[k] = step.h.col(0);
    out.state.c[k] = step.c.col(0);
  }
  Vector top = out.state.h.back();
  if (mode == Mode::kTrain && keep_rate < 1.0) {
    if (!rng) throw Error("training-mode dropout needs a random stream");
    for (Eigen::Index r = 0; r < top.size(); ++r)
      top(r) *= rng->bernoulli(keep_rate) ? 1.0 / keep_rate : 0.0;
  }
  out.logits = net.out_w->value.matrix() * top + net.out_b->value.vector();
  return out;
}

double bow_loss(const VaeModel& model, const Vector& z,
                const std::vector<double>& counts) {
  if (counts.size() != model.hp.vocab_size)
    throw ShapeError("bag-of-words target must have vocabulary length");
  const auto& p = model.params;
  const Vector hidden = (p.at("bow.hidden.w").value.matrix() * z +
                         p.at("bow.hidden.b").value.vector())
                            .array()
                            .tanh()
                            .matrix();
  const Vector logits = p.at("bow.out.w").value.matrix() * hidden +
                        p.at("bow.out.b").value.vector();
  const Vector logp = column_log_softmax(logits);
  double loss = 0.0;
  for (std::size_t w = 0; w < counts.size(); ++w)
    if (counts[w] != 0.0) loss -= counts[w] * logp(static_cast<Eigen::Index>(w));
  return loss;
}

std::vector<TokenId> sample_negatives(std::size_t vocab_size, TokenId target,
                                      std::size_t count, RandomStream& rng) {
  if (count + 1 > vocab_size)
    throw Error("sample count exceeds the number of non-target classes");
  // Partial Fisher-Yates over the non-target ids.
  std::vector<TokenId> pool;
  pool.reserve(vocab_size - 1);
  for (std::size_t w = 0; w < vocab_size; ++w)
    if (static_cast<TokenId>(w) != target) pool.push_back(static_cast<TokenId>(w));
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.index(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

SampledSoftmaxResult sampled_softmax_loss(const Tensor& output_weights,
                                          const Tensor& output_bias,
                                          const Vector& hidden, TokenId target,
                                          std::size_t sample_count,
                                          RandomStream& rng) {
  if (sample_count < 1) throw Error("sampled softmax needs at least one sample");
  const std::size_t vocab = output_weights.rows();
  if (output_weights.cols() != static_cast<std::size_t>(hidden.size()))
    throw ShapeError("output weights do not match the hidden size");
  if (target < 0 || static_cast<std::size_t>(target) >= vocab)
    throw Error("target outside the vocabulary");

  SampledSoftmaxResult result;
  result.classes.push_back(target);
  auto negatives = sample_negatives(vocab, target, sample_count, rng);
  result.classes.insert(result.classes.end(), negatives.begin(), negatives.end());

  const auto w = output_weights.matrix();
  std::vector<double> logits;
  logits.reserve(result.classes.size());
  for (TokenId cls : result.classes)
    logits.push_back(w.row(cls).dot(hidden) + output_bias[static_cast<std::size_t>(cls)]);
  result.probabilities = softmax(logits);
  result.loss = log_sum_exp(logits) - logits[0];
  return result;
}

LossBreakdown total_loss(const VaeModel& model, const Batch& batch,
                         const LossOptions& options, RandomStream& rng) {
  return run_model(model, batch, options, rng, false);
}

LossBreakdown forward_backward(VaeModel& model, const Batch& batch,
                               const LossOptions& options, RandomStream& rng) {
  return run_model(model, batch, options, rng, true);
}

}  // namespace lenvae
