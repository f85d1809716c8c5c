#include "layersim/model.hpp"

#include <cmath>
#include <numbers>

#include "layersim/error.hpp"
#include "layersim/numerics.hpp"

namespace layersim::model {

namespace {

constexpr double kLayerNormEps = 1e-5;

// --- dense layer -----------------------------------------------------------

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y({x.rows(), w.rows()});
  matmul_bt_acc(x, w, y);
  if (!b.empty()) {
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto row = y.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
    }
  }
  return y;
}

void accumulate_colsum(const Tensor& dy, Tensor& gb) {
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    auto row = dy.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) gb[c] += row[c];
  }
}

/// Accumulates dW, db and returns dx for y = x·Wᵀ + b.
Tensor linear_backward(const Tensor& dy, const Tensor& x, const Tensor& w, Tensor& gw, Tensor& gb) {
  matmul_at_acc(dy, x, gw);
  if (!gb.empty()) accumulate_colsum(dy, gb);
  return matmul(dy, w);
}

// --- layer norm ------------------------------------------------------------

struct LayerNormOut {
  Tensor y, norm, inv_std;
};

LayerNormOut layer_norm_forward(const Tensor& x, const Tensor& gain, const Tensor& shift) {
  const std::size_t rows = x.rows(), d = x.cols();
  LayerNormOut out{Tensor({rows, d}), Tensor({rows, d}), Tensor({rows})};
  for (std::size_t r = 0; r < rows; ++r) {
    auto xr = x.row(r);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    out.inv_std[r] = inv;
    for (std::size_t c = 0; c < d; ++c) {
      const double xhat = (xr[c] - mean) * inv;
      out.norm(r, c) = xhat;
      out.y(r, c) = gain[c] * xhat + shift[c];
    }
  }
  return out;
}

Tensor layer_norm_backward(const Tensor& dy, const Tensor& norm, const Tensor& inv_std, const Tensor& gain,
                           Tensor& g_gain, Tensor& g_shift) {
  const std::size_t rows = dy.rows(), d = dy.cols();
  Tensor dx({rows, d});
  std::vector<double> dxhat(d);
  for (std::size_t r = 0; r < rows; ++r) {
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double g = dy(r, c);
      g_gain[c] += g * norm(r, c);
      g_shift[c] += g;
      dxhat[c] = g * gain[c];
      mean_dxhat += dxhat[c];
      mean_dxhat_xhat += dxhat[c] * norm(r, c);
    }
    mean_dxhat /= static_cast<double>(d);
    mean_dxhat_xhat /= static_cast<double>(d);
    for (std::size_t c = 0; c < d; ++c) {
      dx(r, c) = inv_std[r] * (dxhat[c] - mean_dxhat - norm(r, c) * mean_dxhat_xhat);
    }
  }
  return dx;
}

// --- GELU (tanh form) ------------------------------------------------------

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/π)
constexpr double kGeluA = 0.044715;

double gelu(double u) { return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + kGeluA * u * u * u))); }

double gelu_grad(double u) {
  const double inner = kGeluC * (u + kGeluA * u * u * u);
  const double t = std::tanh(inner);
  const double dinner = kGeluC * (1.0 + 3.0 * kGeluA * u * u);
  return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * dinner;
}

// --- blocks ----------------------------------------------------------------

/// Residual branch MLP(LN(x)); fills the ln2/MLP part of the cache.
Tensor mlp_branch_forward(const Block& b, const Tensor& x, detail::BlockCache& cache) {
  auto ln = layer_norm_forward(x, b.ln2_gain, b.ln2_shift);
  cache.ln2_norm = std::move(ln.norm);
  cache.ln2_inv_std = std::move(ln.inv_std);
  cache.pre_act = linear_forward(ln.y, b.w1, b.b1);
  cache.act = cache.pre_act;
  for (auto& v : cache.act.data()) v = gelu(v);
  return linear_forward(cache.act, b.w2, b.b2);
}

/// Gradient through MLP(LN(x)) with respect to x.
Tensor mlp_branch_backward(const Block& b, const detail::BlockCache& cache, const Tensor& dm, Block& g) {
  Tensor dg = linear_backward(dm, cache.act, b.w2, g.w2, g.b2);
  for (std::size_t i = 0; i < dg.size(); ++i) dg[i] *= gelu_grad(cache.pre_act[i]);
  // Rebuild LN output for the fc1 weight gradient.
  Tensor ln_y(cache.ln2_norm.shape());
  for (std::size_t r = 0; r < ln_y.rows(); ++r)
    for (std::size_t c = 0; c < ln_y.cols(); ++c)
      ln_y(r, c) = b.ln2_gain[c] * cache.ln2_norm(r, c) + b.ln2_shift[c];
  Tensor dln = linear_backward(dg, ln_y, b.w1, g.w1, g.b1);
  return layer_norm_backward(dln, cache.ln2_norm, cache.ln2_inv_std, b.ln2_gain, g.ln2_gain, g.ln2_shift);
}

struct AttentionShape {
  std::size_t samples, tokens, heads, head_dim;
};

Tensor attention_forward(const Block& b, const Tensor& a, const AttentionShape& sh, detail::BlockCache& cache) {
  cache.q = linear_forward(a, b.wq, b.bq);
  cache.k = linear_forward(a, b.wk, b.bk);
  cache.v = linear_forward(a, b.wv, b.bv);
  const std::size_t T = sh.tokens, dh = sh.head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  cache.attn.assign(sh.samples * sh.heads * T * T, 0.0);
  Tensor concat(a.shape());
  std::vector<double> scores(T);
  for (std::size_t i = 0; i < sh.samples; ++i) {
    for (std::size_t h = 0; h < sh.heads; ++h) {
      const std::size_t c0 = h * dh;
      double* probs = cache.attn.data() + ((i * sh.heads + h) * T) * T;
      for (std::size_t t1 = 0; t1 < T; ++t1) {
        const std::size_t r1 = i * T + t1;
        for (std::size_t t2 = 0; t2 < T; ++t2) {
          const std::size_t r2 = i * T + t2;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += cache.q(r1, c0 + c) * cache.k(r2, c0 + c);
          scores[t2] = s * scale;
        }
        const auto p = softmax(std::span<const double>(scores));
        for (std::size_t t2 = 0; t2 < T; ++t2) {
          probs[t1 * T + t2] = p[t2];
          const std::size_t r2 = i * T + t2;
          for (std::size_t c = 0; c < dh; ++c) concat(r1, c0 + c) += p[t2] * cache.v(r2, c0 + c);
        }
      }
    }
  }
  cache.attn_concat = concat;
  return linear_forward(concat, b.wo, b.bo);
}

Tensor attention_backward(const Block& b, const detail::BlockCache& cache, const Tensor& a, const Tensor& dout,
                          const AttentionShape& sh, Block& g) {
  Tensor dconcat = linear_backward(dout, cache.attn_concat, b.wo, g.wo, g.bo);
  const std::size_t T = sh.tokens, dh = sh.head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor dq(a.shape()), dk(a.shape()), dv(a.shape());
  std::vector<double> dp(T), ds(T);
  for (std::size_t i = 0; i < sh.samples; ++i) {
    for (std::size_t h = 0; h < sh.heads; ++h) {
      const std::size_t c0 = h * dh;
      const double* probs = cache.attn.data() + ((i * sh.heads + h) * T) * T;
      for (std::size_t t1 = 0; t1 < T; ++t1) {
        const std::size_t r1 = i * T + t1;
        double weighted = 0.0;
        for (std::size_t t2 = 0; t2 < T; ++t2) {
          const std::size_t r2 = i * T + t2;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) {
            s += dconcat(r1, c0 + c) * cache.v(r2, c0 + c);
            dv(r2, c0 + c) += probs[t1 * T + t2] * dconcat(r1, c0 + c);
          }
          dp[t2] = s;
          weighted += probs[t1 * T + t2] * s;
        }
        for (std::size_t t2 = 0; t2 < T; ++t2) ds[t2] = probs[t1 * T + t2] * (dp[t2] - weighted) * scale;
        for (std::size_t t2 = 0; t2 < T; ++t2) {
          const std::size_t r2 = i * T + t2;
          for (std::size_t c = 0; c < dh; ++c) {
            dq(r1, c0 + c) += ds[t2] * cache.k(r2, c0 + c);
            dk(r2, c0 + c) += ds[t2] * cache.q(r1, c0 + c);
          }
        }
      }
    }
  }
  Tensor da = linear_backward(dq, a, b.wq, g.wq, g.bq);
  add_inplace(da, linear_backward(dk, a, b.wk, g.wk, g.bk));
  add_inplace(da, linear_backward(dv, a, b.wv, g.wv, g.bv));
  return da;
}

Tensor rebuild_ln1_output(const Block& b, const detail::BlockCache& cache) {
  Tensor y(cache.ln1_norm.shape());
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) = b.ln1_gain[c] * cache.ln1_norm(r, c) + b.ln1_shift[c];
  return y;
}

void check_batch(const ModelConfig& cfg, const Tensor& batch) {
  if (batch.rank() != 3 || batch.dim(1) != cfg.seq_len || batch.dim(2) != cfg.input_dim) {
    throw DimensionError("batch shape " + shape_string(batch.shape()) + " does not match model input [n x " +
                         std::to_string(cfg.seq_len) + " x " + std::to_string(cfg.input_dim) + "]");
  }
}

}  // namespace

std::string_view arch_name(Arch arch) {
  switch (arch) {
    case Arch::kTransformer: return "transformer";
    case Arch::kMlpSkip: return "mlp_skip";
    case Arch::kMlpNoSkip: return "mlp_noskip";
  }
  return "unknown";
}

Arch parse_arch(std::string_view name) {
  if (name == "transformer") return Arch::kTransformer;
  if (name == "mlp_skip") return Arch::kMlpSkip;
  if (name == "mlp_noskip") return Arch::kMlpNoSkip;
  throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (layers < 1) throw ConfigError("model.layers must be >= 1");
  if (dim < 1) throw ConfigError("model.dim must be >= 1");
  if (seq_len < 1) throw ConfigError("model.seq_len must be >= 1");
  if (input_dim < 1) throw ConfigError("model.input_dim must be >= 1");
  if (classes < 2) throw ConfigError("model.classes must be >= 2");
  if (mlp_ratio < 1) throw ConfigError("model.mlp_ratio must be >= 1");
  if (arch == Arch::kTransformer) {
    if (heads < 1 || dim % heads != 0) {
      throw ConfigError("model.dim (" + std::to_string(dim) + ") must be divisible by model.heads (" +
                        std::to_string(heads) + ")");
    }
  }
  if (!(init_std > 0.0)) throw ConfigError("model.init_std must be positive");
}

std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t d = c.dim, h = c.hidden_dim();
  const std::size_t mlp = 2 * d + (h * d + h) + (d * h + d);
  const std::size_t head = c.classes * d + (c.use_bias ? c.classes : 0);
  if (c.arch == Arch::kTransformer) {
    const std::size_t embed = d * c.input_dim + d + d + (c.seq_len + 1) * d;
    const std::size_t attn = 2 * d + 4 * (d * d + d);
    return embed + c.layers * (attn + mlp) + head;
  }
  const std::size_t embed = d * c.seq_len * c.input_dim + d;
  return embed + c.layers * mlp + head;
}

Parameters Parameters::zeros_like() const {
  Parameters out = *this;
  out.for_each([](const std::string&, Tensor& t) { t.fill(0.0); });
  return out;
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

Model init_model(const ModelConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.dim, h = config.hidden_dim();
  const double sd = config.init_std;
  Model m{config, {}};
  auto& p = m.params;
  const bool tf = config.arch == Arch::kTransformer;
  const std::size_t in = tf ? config.input_dim : config.seq_len * config.input_dim;
  p.embed_w = random_normal({d, in}, sd, rng);
  p.embed_b = Tensor({d});
  if (tf) {
    p.cls_token = random_normal({d}, sd, rng);
    p.pos_embed = random_normal({config.seq_len + 1, d}, sd, rng);
  }
  p.blocks.resize(config.layers);
  for (auto& b : p.blocks) {
    if (tf) {
      b.ln1_gain = Tensor({d}, 1.0);
      b.ln1_shift = Tensor({d});
      b.wq = random_normal({d, d}, sd, rng);
      b.bq = Tensor({d});
      b.wk = random_normal({d, d}, sd, rng);
      b.bk = Tensor({d});
      b.wv = random_normal({d, d}, sd, rng);
      b.bv = Tensor({d});
      b.wo = random_normal({d, d}, sd, rng);
      b.bo = Tensor({d});
    }
    b.ln2_gain = Tensor({d}, 1.0);
    b.ln2_shift = Tensor({d});
    b.w1 = random_normal({h, d}, sd, rng);
    b.b1 = Tensor({h});
    b.w2 = random_normal({d, h}, sd, rng);
    b.b2 = Tensor({d});
  }
  p.classifier_w = random_normal({config.classes, d}, sd, rng);
  if (config.use_bias) p.classifier_b = Tensor({config.classes});
  return m;
}

Tensor apply_classifier(const Tensor& features, const Tensor& weight, const Tensor& bias) {
  if (features.rank() != 2 || weight.rank() != 2 || features.cols() != weight.cols()) {
    throw DimensionError("classifier expects [n x " + std::to_string(weight.rank() == 2 ? weight.cols() : 0) +
                         "] features, got " + shape_string(features.shape()));
  }
  return linear_forward(features, weight, bias);
}

ForwardTrace forward_with_trace(const Model& model, const Tensor& batch, std::vector<std::size_t> labels) {
  const auto& cfg = model.config;
  const auto& p = model.params;
  check_batch(cfg, batch);
  const std::size_t n = batch.dim(0), s = cfg.seq_len, d = cfg.dim;
  if (!labels.empty() && labels.size() != n) throw DimensionError("label count does not match batch size");
  for (auto y : labels)
    if (y >= cfg.classes) throw IndexError("label " + std::to_string(y) + " out of range");

  ForwardTrace tr;
  tr.samples = n;
  tr.labels = std::move(labels);
  tr.residual = cfg.residual();
  tr.cache.blocks.resize(cfg.layers);

  const bool tf = cfg.arch == Arch::kTransformer;
  const std::size_t T = tf ? s + 1 : 1;
  auto readout = [&](const Tensor& h) {
    Tensor out({n, d});
    for (std::size_t i = 0; i < n; ++i) {
      auto src = h.row(i * T);
      std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
  };

  Tensor hidden;
  if (tf) {
    tr.cache.tokens = batch.reshaped({n * s, cfg.input_dim});
    const Tensor emb = linear_forward(tr.cache.tokens, p.embed_w, p.embed_b);
    hidden = Tensor({n * T, d});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < d; ++c) hidden(i * T, c) = p.cls_token[c] + p.pos_embed(0, c);
      for (std::size_t t = 1; t < T; ++t)
        for (std::size_t c = 0; c < d; ++c) hidden(i * T + t, c) = emb(i * s + t - 1, c) + p.pos_embed(t, c);
    }
  } else {
    tr.cache.tokens = batch.reshaped({n, s * cfg.input_dim});
    hidden = linear_forward(tr.cache.tokens, p.embed_w, p.embed_b);
  }
  tr.features.push_back(readout(hidden));

  const AttentionShape ash{n, T, cfg.heads, tf ? d / cfg.heads : 0};
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const Block& b = p.blocks[l];
    auto& cache = tr.cache.blocks[l];
    cache.input = hidden;
    Tensor branch_total({n * T, d});
    if (tf) {
      auto ln = layer_norm_forward(hidden, b.ln1_gain, b.ln1_shift);
      cache.ln1_norm = std::move(ln.norm);
      cache.ln1_inv_std = std::move(ln.inv_std);
      Tensor attn = attention_forward(b, ln.y, ash, cache);
      cache.mid = add(hidden, attn);
      Tensor mlp = mlp_branch_forward(b, cache.mid, cache);
      hidden = add(cache.mid, mlp);
      branch_total = add(attn, mlp);
    } else {
      Tensor mlp = mlp_branch_forward(b, hidden, cache);
      hidden = cfg.residual() ? add(hidden, mlp) : mlp;
      branch_total = std::move(mlp);
    }
    tr.branches.push_back(readout(branch_total));
    tr.features.push_back(readout(hidden));
  }

  for (const auto& h : tr.features) tr.logits.push_back(apply_classifier(h, p.classifier_w, p.classifier_b));
  return tr;
}

std::vector<std::size_t> predict(const ForwardTrace& trace, std::size_t layer) {
  if (layer >= trace.logits.size()) {
    throw IndexError("layer " + std::to_string(layer) + " out of range [0, " + std::to_string(trace.layers()) + "]");
  }
  const Tensor& z = trace.logits[layer];
  std::vector<std::size_t> out(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) out[i] = argmax(z.row(i));
  return out;
}

Parameters backward(const Model& model, const ForwardTrace& trace, const TraceGradients& grads) {
  const auto& cfg = model.config;
  const auto& p = model.params;
  const std::size_t L = cfg.layers, n = trace.samples, d = cfg.dim, s = cfg.seq_len;
  const bool tf = cfg.arch == Arch::kTransformer;
  const std::size_t T = tf ? s + 1 : 1;
  if (trace.layers() != L || trace.cache.blocks.size() != L) throw DimensionError("trace does not match model depth");
  auto check_list = [&](const std::vector<Tensor>& list, const char* what) {
    if (!list.empty() && list.size() != L + 1) {
      throw DimensionError(std::string(what) + " gradients must have L+1 entries");
    }
  };
  check_list(grads.logits, "logit");
  check_list(grads.features, "feature");

  Parameters g = p.zeros_like();

  // Readout-feature gradients, including the path through the shared classifier.
  std::vector<Tensor> dh(L + 1, Tensor({n, d}));
  for (std::size_t l = 0; l <= L; ++l) {
    if (!grads.features.empty() && !grads.features[l].empty()) add_inplace(dh[l], grads.features[l]);
    if (!grads.logits.empty() && !grads.logits[l].empty()) {
      add_inplace(dh[l], linear_backward(grads.logits[l], trace.features[l], p.classifier_w, g.classifier_w,
                                         g.classifier_b));
    }
  }

  auto inject = [&](Tensor& dhidden, const Tensor& dread) {
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = dhidden.row(i * T);
      auto src = dread.row(i);
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
  };

  Tensor dhidden({n * T, d});
  inject(dhidden, dh[L]);
  const AttentionShape ash{n, T, cfg.heads, tf ? d / cfg.heads : 0};
  for (std::size_t l = L; l-- > 0;) {
    const Block& b = p.blocks[l];
    Block& gb = g.blocks[l];
    const auto& cache = trace.cache.blocks[l];
    if (tf) {
      Tensor dmid = dhidden;
      add_inplace(dmid, mlp_branch_backward(b, cache, dhidden, gb));
      Tensor din = dmid;
      const Tensor a = rebuild_ln1_output(b, cache);
      const Tensor da = attention_backward(b, cache, a, dmid, ash, gb);
      add_inplace(din, layer_norm_backward(da, cache.ln1_norm, cache.ln1_inv_std, b.ln1_gain, gb.ln1_gain,
                                           gb.ln1_shift));
      dhidden = std::move(din);
    } else {
      Tensor din = mlp_branch_backward(b, cache, dhidden, gb);
      if (cfg.residual()) add_inplace(din, dhidden);
      dhidden = std::move(din);
    }
    inject(dhidden, dh[l]);
  }

  if (tf) {
    Tensor demb({n * s, d});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < d; ++c) {
        g.cls_token[c] += dhidden(i * T, c);
        g.pos_embed(0, c) += dhidden(i * T, c);
      }
      for (std::size_t t = 1; t < T; ++t) {
        for (std::size_t c = 0; c < d; ++c) {
          const double v = dhidden(i * T + t, c);
          demb(i * s + t - 1, c) = v;
          g.pos_embed(t, c) += v;
        }
      }
    }
    linear_backward(demb, trace.cache.tokens, p.embed_w, g.embed_w, g.embed_b);
  } else {
    linear_backward(dhidden, trace.cache.tokens, p.embed_w, g.embed_w, g.embed_b);
  }
  return g;
}

}  // namespace layersim::model
