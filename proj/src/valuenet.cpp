#include "swarmtrack/valuenet.hpp"

#include <cmath>
#include <string>

#include "swarmtrack/errors.hpp"

namespace swarmtrack::valuenet {

namespace {

// Tensor indices inside NetParams::tensors.
constexpr int kEnc0W = 0, kEnc0B = 1, kEnc1W = 2, kEnc1B = 3;
constexpr int kBlockBase = 4, kPerBlock = 8;
constexpr int kQW = 0, kQB = 1, kKW = 2, kKB = 3, kVW = 4, kVB = 5, kOW = 6, kOB = 7;

int block_index(int block, int slot) { return kBlockBase + kPerBlock * block + slot; }
int decoder_index(const NetConfig& cfg, int slot) {
  return kBlockBase + kPerBlock * cfg.n_attention_blocks + slot;
}

template <typename T>
void add_bias(Matrix<T>& m, const Matrix<T>& bias) {
  m.rowwise() += bias.row(0);
}

template <typename T>
Matrix<T> dense(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& b) {
  Matrix<T> out = x * w;
  add_bias(out, b);
  return out;
}

template <typename T>
Matrix<T> activate(const Matrix<T>& z, Activation a) {
  if (a == Activation::kRelu) return z.cwiseMax(T(0));
  return z.array().tanh().matrix();
}

// dL/dz given dL/dh, the pre-activation z and the activation h.
template <typename T>
Matrix<T> activation_grad(const Matrix<T>& dh, const Matrix<T>& z, const Matrix<T>& h,
                          Activation a) {
  if (a == Activation::kRelu) {
    return (z.array() > T(0)).select(dh.array(), T(0)).matrix();
  }
  return (dh.array() * (T(1) - h.array().square())).matrix();
}

template <typename T>
void softmax_rows(Eigen::Ref<Matrix<T>> s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    auto row = s.row(r);
    const T mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

template <typename T>
Matrix<T> glorot(int rows, int cols, SeededStream& stream) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<T>(stream.uniform(-bound, bound));
  }
  return m;
}

// Forward through one attention block, filling `bc` when given.
template <typename T>
Matrix<T> block_forward(const Matrix<T>& x, int set_size, const NetParams<T>& p, int block,
                        bool residual, BlockCache<T>* bc) {
  const NetConfig& cfg = p.config;
  const int heads = cfg.n_heads;
  const int dh = cfg.embed_dim / heads;
  const int c = set_size;
  const auto n_sets = static_cast<int>(x.rows()) / c;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  Matrix<T> q = dense(x, p.tensors[block_index(block, kQW)], p.tensors[block_index(block, kQB)]);
  Matrix<T> k = dense(x, p.tensors[block_index(block, kKW)], p.tensors[block_index(block, kKB)]);
  Matrix<T> v = dense(x, p.tensors[block_index(block, kVW)], p.tensors[block_index(block, kVB)]);

  Matrix<T> concat(x.rows(), cfg.embed_dim);
  std::vector<Matrix<T>> weights(static_cast<std::size_t>(heads), Matrix<T>(x.rows(), c));
  for (int b = 0; b < n_sets; ++b) {
    for (int h = 0; h < heads; ++h) {
      auto w = weights[static_cast<std::size_t>(h)].block(b * c, 0, c, c);
      w.noalias() = q.block(b * c, h * dh, c, dh) * k.block(b * c, h * dh, c, dh).transpose();
      w *= scale;
      softmax_rows<T>(w);
      concat.block(b * c, h * dh, c, dh).noalias() = w * v.block(b * c, h * dh, c, dh);
    }
  }
  Matrix<T> out =
      dense(concat, p.tensors[block_index(block, kOW)], p.tensors[block_index(block, kOB)]);
  if (residual) out += x;

  if (bc != nullptr) {
    bc->input = x;
    bc->q = std::move(q);
    bc->k = std::move(k);
    bc->v = std::move(v);
    bc->weights = std::move(weights);
    bc->concat = std::move(concat);
  }
  return out;
}

template <typename T>
void accumulate_dense_grads(const Matrix<T>& x, const Matrix<T>& dz, Matrix<T>& dw, Matrix<T>& db) {
  dw.noalias() += x.transpose() * dz;
  db += dz.colwise().sum();
}

}  // namespace

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw InvalidArgument("unknown activation: " + name);
}

std::string activation_name(Activation a) { return a == Activation::kRelu ? "relu" : "tanh"; }

void NetConfig::validate() const {
  if (feature_dim != encoding::kFeatureDim) throw InvalidArgument("NetConfig: feature_dim must be 6");
  if (embed_dim < 1 || n_heads < 1 || embed_dim % n_heads != 0) {
    throw InvalidArgument("NetConfig: embed_dim must be a positive multiple of n_heads");
  }
  if (n_attention_blocks < 0) throw InvalidArgument("NetConfig: negative block count");
  if (decoder_hidden < 1) throw InvalidArgument("NetConfig: decoder_hidden must be >= 1");
  if (n_actions != kNumActions) throw InvalidArgument("NetConfig: n_actions must be 12");
  if (attention_normalizer != "softmax") {
    throw InvalidArgument("NetConfig: unsupported attention normalizer " + attention_normalizer);
  }
  for (double s : input_scale) {
    if (!std::isfinite(s)) throw InvalidArgument("NetConfig: non-finite input scale");
  }
}

std::vector<ParamSpec> param_layout(const NetConfig& cfg) {
  cfg.validate();
  const int e = cfg.embed_dim;
  std::vector<ParamSpec> out;
  out.push_back({"encoder.0.weight", cfg.feature_dim, e, false});
  out.push_back({"encoder.0.bias", 1, e, true});
  out.push_back({"encoder.1.weight", e, e, false});
  out.push_back({"encoder.1.bias", 1, e, true});
  for (int b = 0; b < cfg.n_attention_blocks; ++b) {
    const std::string pre = "attention." + std::to_string(b) + ".";
    for (const char* proj : {"query", "key", "value", "output"}) {
      out.push_back({pre + proj + ".weight", e, e, false});
      out.push_back({pre + proj + ".bias", 1, e, true});
    }
  }
  out.push_back({"decoder.0.weight", e, cfg.decoder_hidden, false});
  out.push_back({"decoder.0.bias", 1, cfg.decoder_hidden, true});
  out.push_back({"decoder.1.weight", cfg.decoder_hidden, cfg.n_actions, false});
  out.push_back({"decoder.1.bias", 1, cfg.n_actions, true});
  return out;
}

template <typename T>
std::size_t NetParams<T>::num_elements() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
  return n;
}

template <typename T>
bool NetParams<T>::same_shape(const NetParams& other) const {
  if (tensors.size() != other.tensors.size()) return false;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].rows() != other.tensors[i].rows() ||
        tensors[i].cols() != other.tensors[i].cols()) {
      return false;
    }
  }
  return true;
}

template <typename T>
bool NetParams<T>::all_finite() const {
  for (const auto& t : tensors) {
    if (!t.allFinite()) return false;
  }
  return true;
}

template <typename T>
NetParams<T> init_params(const NetConfig& cfg, SeededStream& stream) {
  NetParams<T> p;
  p.config = cfg;
  for (const auto& spec : param_layout(cfg)) {
    if (spec.is_bias) {
      p.tensors.push_back(Matrix<T>::Zero(spec.rows, spec.cols));
    } else {
      p.tensors.push_back(glorot<T>(spec.rows, spec.cols, stream));
    }
  }
  return p;
}

template <typename T>
NetParams<T> zeros_like(const NetParams<T>& p) {
  NetParams<T> z;
  z.config = p.config;
  z.tensors.reserve(p.tensors.size());
  for (const auto& t : p.tensors) z.tensors.push_back(Matrix<T>::Zero(t.rows(), t.cols()));
  return z;
}

template <typename T>
SetBatch<T> make_batch(const encoding::FeatureSet& fs) {
  const encoding::FeatureSet* ptr = &fs;
  return make_batch<T>(std::span<const encoding::FeatureSet* const>(&ptr, 1));
}

template <typename T>
SetBatch<T> make_batch(std::span<const encoding::FeatureSet* const> sets) {
  if (sets.empty()) throw InvalidArgument("make_batch: no sets");
  const auto c = static_cast<int>(sets.front()->size());
  if (c < 1) throw InvalidArgument("make_batch: empty feature set");
  SetBatch<T> batch;
  batch.batch_size = static_cast<int>(sets.size());
  batch.set_size = c;
  batch.features.resize(static_cast<Eigen::Index>(batch.batch_size) * c, encoding::kFeatureDim);
  Eigen::Index row = 0;
  for (const auto* fs : sets) {
    if (static_cast<int>(fs->size()) != c) throw InvalidArgument("make_batch: mixed cardinality");
    for (const auto& f : fs->features) {
      batch.features(row, 0) = static_cast<T>(f.r);
      batch.features(row, 1) = static_cast<T>(f.theta);
      batch.features(row, 2) = static_cast<T>(f.r_dot);
      batch.features(row, 3) = static_cast<T>(f.theta_dot);
      batch.features(row, 4) = static_cast<T>(f.logdet_cov);
      batch.features(row, 5) = static_cast<T>(f.observed);
      ++row;
    }
  }
  return batch;
}

template <typename T>
Matrix<T> attention_block(const Matrix<T>& x, int set_size, const NetParams<T>& params, int block,
                          bool residual, std::vector<Matrix<T>>* weights_out) {
  if (set_size < 1 || x.rows() % set_size != 0) {
    throw InvalidArgument("attention_block: rows not a multiple of the set size");
  }
  if (block < 0 || block >= params.config.n_attention_blocks) {
    throw InvalidArgument("attention_block: no such block");
  }
  BlockCache<T> bc;
  Matrix<T> out = block_forward(x, set_size, params, block, residual,
                                weights_out != nullptr ? &bc : nullptr);
  if (weights_out != nullptr) *weights_out = std::move(bc.weights);
  return out;
}

template <typename T>
Matrix<T> forward_batch(const NetParams<T>& p, const SetBatch<T>& batch, ForwardCache<T>* cache) {
  const NetConfig& cfg = p.config;
  const int c = batch.set_size;
  const int n_sets = batch.batch_size;
  if (c < 1 || n_sets < 1) throw InvalidArgument("forward: empty set");

  Eigen::Matrix<T, 1, Eigen::Dynamic> scale(encoding::kFeatureDim);
  for (int i = 0; i < encoding::kFeatureDim; ++i) scale(i) = static_cast<T>(cfg.input_scale[i]);
  Matrix<T> x = batch.features.array().rowwise() * scale.array();

  Matrix<T> enc_pre = dense(x, p.tensors[kEnc0W], p.tensors[kEnc0B]);
  Matrix<T> enc_hidden = activate(enc_pre, cfg.activation);
  Matrix<T> h = dense(enc_hidden, p.tensors[kEnc1W], p.tensors[kEnc1B]);

  if (cache != nullptr) {
    cache->batch_size = n_sets;
    cache->set_size = c;
    cache->blocks.assign(static_cast<std::size_t>(cfg.n_attention_blocks), BlockCache<T>{});
  }
  for (int b = 0; b < cfg.n_attention_blocks; ++b) {
    h = block_forward(h, c, p, b, true,
                      cache != nullptr ? &cache->blocks[static_cast<std::size_t>(b)] : nullptr);
  }

  // Pooling and the decoder run in double: summation order inside a set then
  // moves Q by well under one float ulp.
  Matrix<double> pooled(n_sets, cfg.embed_dim);
  for (int s = 0; s < n_sets; ++s) {
    pooled.row(s) = h.block(s * c, 0, c, cfg.embed_dim).template cast<double>().colwise().sum();
  }
  const auto wide = [&](int slot) { return p.tensors[decoder_index(cfg, slot)].template cast<double>().eval(); };
  Matrix<double> dec_pre = dense<double>(pooled, wide(0), wide(1));
  Matrix<double> dec_hidden = activate<double>(dec_pre, cfg.activation);
  Matrix<T> q = dense<double>(dec_hidden, wide(2), wide(3)).template cast<T>();

  if (cache != nullptr) {
    cache->scaled_input = std::move(x);
    cache->enc_pre = std::move(enc_pre);
    cache->enc_hidden = std::move(enc_hidden);
    cache->set_output = std::move(h);
    cache->pooled = pooled.template cast<T>();
    cache->dec_pre = dec_pre.template cast<T>();
    cache->dec_hidden = dec_hidden.template cast<T>();
  }
  return q;
}

template <typename T>
void backward_batch(const NetParams<T>& p, const ForwardCache<T>& cache, const Matrix<T>& dq,
                    Gradients<T>& g) {
  const NetConfig& cfg = p.config;
  const int c = cache.set_size;
  const int n_sets = cache.batch_size;
  const int e = cfg.embed_dim;
  const int heads = cfg.n_heads;
  const int dh = e / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  if (dq.rows() != n_sets || dq.cols() != cfg.n_actions) {
    throw InvalidArgument("backward: dQ shape mismatch");
  }

  // decoder
  accumulate_dense_grads(cache.dec_hidden, dq, g.tensors[decoder_index(cfg, 2)],
                         g.tensors[decoder_index(cfg, 3)]);
  Matrix<T> d_hidden = dq * p.tensors[decoder_index(cfg, 2)].transpose();
  Matrix<T> d_pre = activation_grad(d_hidden, cache.dec_pre, cache.dec_hidden, cfg.activation);
  accumulate_dense_grads(cache.pooled, d_pre, g.tensors[decoder_index(cfg, 0)],
                         g.tensors[decoder_index(cfg, 1)]);
  Matrix<T> d_pooled = d_pre * p.tensors[decoder_index(cfg, 0)].transpose();

  // sum pooling broadcasts the pooled gradient to every element of its set
  Matrix<T> dx(static_cast<Eigen::Index>(n_sets) * c, e);
  for (int s = 0; s < n_sets; ++s) dx.block(s * c, 0, c, e).rowwise() = d_pooled.row(s);

  for (int b = cfg.n_attention_blocks - 1; b >= 0; --b) {
    const BlockCache<T>& bc = cache.blocks[static_cast<std::size_t>(b)];
    const Matrix<T>& d_out = dx;  // residual path keeps dx as the input gradient too

    accumulate_dense_grads(bc.concat, d_out, g.tensors[block_index(b, kOW)],
                           g.tensors[block_index(b, kOB)]);
    const Matrix<T> d_concat = d_out * p.tensors[block_index(b, kOW)].transpose();

    Matrix<T> dq_proj(dx.rows(), e), dk_proj(dx.rows(), e), dv_proj(dx.rows(), e);
    for (int s = 0; s < n_sets; ++s) {
      for (int h = 0; h < heads; ++h) {
        const auto w = bc.weights[static_cast<std::size_t>(h)].block(s * c, 0, c, c);
        const auto d_head = d_concat.block(s * c, h * dh, c, dh);
        const auto vh = bc.v.block(s * c, h * dh, c, dh);
        dv_proj.block(s * c, h * dh, c, dh).noalias() = w.transpose() * d_head;
        Matrix<T> dw = d_head * vh.transpose();
        // softmax Jacobian, row-wise: ds = w * (dw - <dw, w>)
        const Vector<T> inner = (dw.array() * w.array()).rowwise().sum();
        Matrix<T> ds = (w.array() * (dw.array().colwise() - inner.array())).matrix() * scale;
        dq_proj.block(s * c, h * dh, c, dh).noalias() = ds * bc.k.block(s * c, h * dh, c, dh);
        dk_proj.block(s * c, h * dh, c, dh).noalias() =
            ds.transpose() * bc.q.block(s * c, h * dh, c, dh);
      }
    }

    accumulate_dense_grads(bc.input, dq_proj, g.tensors[block_index(b, kQW)],
                           g.tensors[block_index(b, kQB)]);
    accumulate_dense_grads(bc.input, dk_proj, g.tensors[block_index(b, kKW)],
                           g.tensors[block_index(b, kKB)]);
    accumulate_dense_grads(bc.input, dv_proj, g.tensors[block_index(b, kVW)],
                           g.tensors[block_index(b, kVB)]);

    Matrix<T> dx_in = dx;
    dx_in.noalias() += dq_proj * p.tensors[block_index(b, kQW)].transpose();
    dx_in.noalias() += dk_proj * p.tensors[block_index(b, kKW)].transpose();
    dx_in.noalias() += dv_proj * p.tensors[block_index(b, kVW)].transpose();
    dx = std::move(dx_in);
  }

  // encoder
  accumulate_dense_grads(cache.enc_hidden, dx, g.tensors[kEnc1W], g.tensors[kEnc1B]);
  const Matrix<T> d_enc_hidden = dx * p.tensors[kEnc1W].transpose();
  const Matrix<T> d_enc_pre =
      activation_grad(d_enc_hidden, cache.enc_pre, cache.enc_hidden, cfg.activation);
  accumulate_dense_grads(cache.scaled_input, d_enc_pre, g.tensors[kEnc0W], g.tensors[kEnc0B]);
}

template <typename T>
Vector<T> forward(const encoding::FeatureSet& fs, const NetParams<T>& params) {
  if (fs.empty()) throw InvalidArgument("forward: empty feature set");
  const Matrix<T> q = forward_batch(params, make_batch<T>(fs));
  return q.row(0).transpose();
}

template <typename T>
Gradients<T> backward(const encoding::FeatureSet& fs, const NetParams<T>& params,
                      std::span<const T> dq) {
  if (fs.empty()) throw InvalidArgument("backward: empty feature set");
  if (static_cast<int>(dq.size()) != params.config.n_actions) {
    throw InvalidArgument("backward: dQ must have one entry per action");
  }
  ForwardCache<T> cache;
  forward_batch(params, make_batch<T>(fs), &cache);
  Matrix<T> d(1, params.config.n_actions);
  for (int a = 0; a < params.config.n_actions; ++a) d(0, a) = dq[static_cast<std::size_t>(a)];
  Gradients<T> g = zeros_like(params);
  backward_batch(params, cache, d, g);
  return g;
}

template <typename T>
NetParams<T> polyak_update(const NetParams<T>& target, const NetParams<T>& online, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidArgument("polyak_update: tau outside [0, 1]");
  if (!target.same_shape(online)) throw InvalidArgument("polyak_update: shape mismatch");
  NetParams<T> out = target;
  const T t = static_cast<T>(tau);
  for (std::size_t i = 0; i < out.tensors.size(); ++i) {
    out.tensors[i] = t * online.tensors[i] + (T(1) - t) * target.tensors[i];
  }
  return out;
}

template <typename T>
MlpParams<T> init_mlp(int n_targets, int hidden, SeededStream& stream) {
  if (n_targets < 1 || hidden < 1) throw InvalidArgument("init_mlp: sizes must be positive");
  MlpParams<T> p;
  p.n_targets = n_targets;
  p.hidden = hidden;
  const int in = encoding::kFeatureDim * n_targets;
  p.w0 = glorot<T>(in, hidden, stream);
  p.b0 = Matrix<T>::Zero(1, hidden);
  p.w1 = glorot<T>(hidden, hidden, stream);
  p.b1 = Matrix<T>::Zero(1, hidden);
  p.w2 = glorot<T>(hidden, kNumActions, stream);
  p.b2 = Matrix<T>::Zero(1, kNumActions);
  return p;
}

template <typename T>
Vector<T> mlp_forward(std::span<const T> input, const MlpParams<T>& p) {
  const auto expected = static_cast<std::size_t>(encoding::kFeatureDim * p.n_targets);
  if (input.size() != expected) {
    throw InvalidArgument("mlp_forward: expected " + std::to_string(expected) + " inputs, got " +
                          std::to_string(input.size()));
  }
  Matrix<T> x(1, static_cast<Eigen::Index>(expected));
  for (std::size_t i = 0; i < expected; ++i) {
    x(0, static_cast<Eigen::Index>(i)) =
        input[i] * static_cast<T>(p.input_scale[i % encoding::kFeatureDim]);
  }
  const Matrix<T> h0 = dense(x, p.w0, p.b0).cwiseMax(T(0));
  const Matrix<T> h1 = dense(h0, p.w1, p.b1).cwiseMax(T(0));
  const Matrix<T> q = dense(h1, p.w2, p.b2);
  return q.row(0).transpose();
}

template <typename T>
std::vector<T> flatten_features(const encoding::FeatureSet& fs) {
  std::vector<T> out;
  out.reserve(fs.size() * encoding::kFeatureDim);
  for (const auto& f : fs.features) {
    for (double v : {f.r, f.theta, f.r_dot, f.theta_dot, f.logdet_cov, f.observed}) {
      out.push_back(static_cast<T>(v));
    }
  }
  return out;
}

#define SWARMTRACK_INSTANTIATE(T)                                                               \
  template struct NetParams<T>;                                                                 \
  template NetParams<T> init_params<T>(const NetConfig&, SeededStream&);                        \
  template NetParams<T> zeros_like<T>(const NetParams<T>&);                                     \
  template SetBatch<T> make_batch<T>(const encoding::FeatureSet&);                              \
  template SetBatch<T> make_batch<T>(std::span<const encoding::FeatureSet* const>);             \
  template Matrix<T> forward_batch<T>(const NetParams<T>&, const SetBatch<T>&,                  \
                                      ForwardCache<T>*);                                        \
  template void backward_batch<T>(const NetParams<T>&, const ForwardCache<T>&,                  \
                                  const Matrix<T>&, Gradients<T>&);                             \
  template Vector<T> forward<T>(const encoding::FeatureSet&, const NetParams<T>&);              \
  template Gradients<T> backward<T>(const encoding::FeatureSet&, const NetParams<T>&,           \
                                    std::span<const T>);                                        \
  template Matrix<T> attention_block<T>(const Matrix<T>&, int, const NetParams<T>&, int, bool,  \
                                        std::vector<Matrix<T>>*);                               \
  template NetParams<T> polyak_update<T>(const NetParams<T>&, const NetParams<T>&, double);     \
  template MlpParams<T> init_mlp<T>(int, int, SeededStream&);                                   \
  template Vector<T> mlp_forward<T>(std::span<const T>, const MlpParams<T>&);                   \
  template std::vector<T> flatten_features<T>(const encoding::FeatureSet&);

SWARMTRACK_INSTANTIATE(float)
SWARMTRACK_INSTANTIATE(double)

#undef SWARMTRACK_INSTANTIATE

}  // namespace swarmtrack::valuenet
