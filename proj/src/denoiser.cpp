#include "hydrocast/denoiser.hpp"

#include "hydrocast/error.hpp"
#include "hydrocast/rng.hpp"

#include <cmath>
#include <string>

namespace hydrocast {

void Architecture::validate() const {
  if (channels < 2 || width < 4 || blocks < 1 || heads < 1 || width % heads != 0 || diffusion_steps < 1) {
    throw Error(Errc::InvalidShape, "architecture needs K >= 2, d >= 4, R >= 1, heads | d, T >= 1 (got K=" +
                                        std::to_string(channels) + ", d=" + std::to_string(width) +
                                        ", R=" + std::to_string(blocks) + ", heads=" + std::to_string(heads) + ")");
  }
}

void to_json(nlohmann::json& j, const Architecture& a) {
  j = nlohmann::json{{"channels", a.channels},
                     {"width", a.width},
                     {"blocks", a.blocks},
                     {"heads", a.heads},
                     {"diffusion_steps", a.diffusion_steps}};
}

void from_json(const nlohmann::json& j, Architecture& a) {
  j.at("channels").get_to(a.channels);
  j.at("width").get_to(a.width);
  j.at("blocks").get_to(a.blocks);
  j.at("heads").get_to(a.heads);
  j.at("diffusion_steps").get_to(a.diffusion_steps);
}

std::size_t parameter_count(const Architecture& arch) {
  const std::size_t K = arch.channels;
  const std::size_t d = arch.width;
  const std::size_t R = arch.blocks;
  const std::size_t input = 3 * d + K * d;
  const std::size_t step = 2 * d * d + 2 * d;
  const std::size_t block = 2 * d + 4 * (d * d + d) + 2 * d + K * K + 2 * (d * d + d);
  const std::size_t output = 2 * d + d + 1;
  return input + step + R * block + output;
}

// ---------------------------------------------------------------------------
// Parameter container

template <typename S>
DenoiserParams<S> DenoiserParams<S>::zeros(const Architecture& arch) {
  arch.validate();
  const int K = arch.channels;
  const int d = arch.width;
  DenoiserParams p;
  p.arch = arch;
  p.value_proj = Mat<S>::Zero(1, d);
  p.cond_proj = Mat<S>::Zero(1, d);
  p.input_bias = Mat<S>::Zero(1, d);
  p.channel_embedding = Mat<S>::Zero(K, d);
  p.step_w1 = Mat<S>::Zero(d, d);
  p.step_b1 = Mat<S>::Zero(1, d);
  p.step_w2 = Mat<S>::Zero(d, d);
  p.step_b2 = Mat<S>::Zero(1, d);
  p.blocks.resize(arch.blocks);
  for (auto& b : p.blocks) {
    for (Mat<S>* m : {&b.attn_norm_gain, &b.attn_norm_bias, &b.bq, &b.bk, &b.bv, &b.bo, &b.mix_norm_gain,
                      &b.mix_norm_bias, &b.b1, &b.b2}) {
      *m = Mat<S>::Zero(1, d);
    }
    for (Mat<S>* m : {&b.wq, &b.wk, &b.wv, &b.wo, &b.w1, &b.w2}) *m = Mat<S>::Zero(d, d);
    b.channel_mix = Mat<S>::Zero(K, K);
  }
  p.out_norm_gain = Mat<S>::Zero(1, d);
  p.out_norm_bias = Mat<S>::Zero(1, d);
  p.out_w = Mat<S>::Zero(d, 1);
  p.out_b = Mat<S>::Zero(1, 1);
  return p;
}

namespace {

template <typename P, typename M>
std::vector<std::pair<std::string, M*>> list_tensors(P& p) {
  std::vector<std::pair<std::string, M*>> out{{"input.value_proj", &p.value_proj},
                                              {"input.cond_proj", &p.cond_proj},
                                              {"input.bias", &p.input_bias},
                                              {"input.channel_embedding", &p.channel_embedding},
                                              {"step.w1", &p.step_w1},
                                              {"step.b1", &p.step_b1},
                                              {"step.w2", &p.step_w2},
                                              {"step.b2", &p.step_b2}};
  for (std::size_t r = 0; r < p.blocks.size(); ++r) {
    auto& b = p.blocks[r];
    const std::string prefix = "block" + std::to_string(r) + ".";
    out.insert(out.end(), {{prefix + "attn_norm.gain", &b.attn_norm_gain},
                           {prefix + "attn_norm.bias", &b.attn_norm_bias},
                           {prefix + "attn.wq", &b.wq},
                           {prefix + "attn.bq", &b.bq},
                           {prefix + "attn.wk", &b.wk},
                           {prefix + "attn.bk", &b.bk},
                           {prefix + "attn.wv", &b.wv},
                           {prefix + "attn.bv", &b.bv},
                           {prefix + "attn.wo", &b.wo},
                           {prefix + "attn.bo", &b.bo},
                           {prefix + "mix_norm.gain", &b.mix_norm_gain},
                           {prefix + "mix_norm.bias", &b.mix_norm_bias},
                           {prefix + "mix.channel", &b.channel_mix},
                           {prefix + "mix.w1", &b.w1},
                           {prefix + "mix.b1", &b.b1},
                           {prefix + "mix.w2", &b.w2},
                           {prefix + "mix.b2", &b.b2}});
  }
  out.insert(out.end(), {{"output.norm.gain", &p.out_norm_gain},
                         {"output.norm.bias", &p.out_norm_bias},
                         {"output.w", &p.out_w},
                         {"output.b", &p.out_b}});
  return out;
}

}  // namespace

template <typename S>
std::vector<std::pair<std::string, Mat<S>*>> DenoiserParams<S>::tensors() {
  return list_tensors<DenoiserParams<S>, Mat<S>>(*this);
}

template <typename S>
std::vector<std::pair<std::string, const Mat<S>*>> DenoiserParams<S>::tensors() const {
  return list_tensors<const DenoiserParams<S>, const Mat<S>>(*this);
}

template <typename S>
std::size_t DenoiserParams<S>::size() const {
  std::size_t n = 0;
  for (const auto& [name, m] : tensors()) n += static_cast<std::size_t>(m->size());
  return n;
}

template <typename S>
DenoiserParams<S> init_params(const Architecture& arch, std::uint64_t seed) {
  auto p = DenoiserParams<double>::zeros(arch);
  Rng rng(seed);
  auto fill = [&](Mat<double>& m, double fan_in) {
    const double scale = 1.0 / std::sqrt(fan_in);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  };
  const double d = arch.width;
  const double K = arch.channels;
  fill(p.value_proj, 1.0);
  fill(p.cond_proj, 1.0);
  fill(p.channel_embedding, K);
  fill(p.step_w1, d);
  fill(p.step_w2, d);
  for (auto& b : p.blocks) {
    b.attn_norm_gain.setOnes();
    b.mix_norm_gain.setOnes();
    for (Mat<double>* m : {&b.wq, &b.wk, &b.wv, &b.wo, &b.w1, &b.w2}) fill(*m, d);
    fill(b.channel_mix, K);
  }
  p.out_norm_gain.setOnes();
  // output projection (out_w, out_b) stays zero
  return p.template cast<S>();
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

constexpr double kNormEpsilon = 1e-5;

template <typename S>
struct NormCache {
  Mat<S> xhat;
  Vec<S> inv_std;
};

template <typename S>
S sigmoid(S z) {
  return S(1) / (S(1) + std::exp(-z));
}

template <typename S>
void silu(const Mat<S>& z, Mat<S>& out) {
  out.resize(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.size(); ++i) out.data()[i] = z.data()[i] * sigmoid(z.data()[i]);
}

/// grad_in = grad_out * silu'(z)
template <typename S>
void silu_backward(const Mat<S>& z, Mat<S>& grad) {
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const S zi = z.data()[i];
    const S s = sigmoid(zi);
    grad.data()[i] *= s * (S(1) + zi * (S(1) - s));
  }
}

template <typename S>
void layer_norm(const Mat<S>& x, const Mat<S>& gain, const Mat<S>& bias, NormCache<S>& cache, Mat<S>& y) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  cache.xhat.resize(n, d);
  cache.inv_std.resize(n);
  y.resize(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const S mean = x.row(r).mean();
    auto xhat = cache.xhat.row(r);
    xhat = x.row(r).array() - mean;
    const S var = xhat.squaredNorm() / static_cast<S>(d);
    const S inv = S(1) / std::sqrt(var + static_cast<S>(kNormEpsilon));
    cache.inv_std(r) = inv;
    xhat *= inv;
    y.row(r) = xhat.cwiseProduct(gain.row(0)) + bias.row(0);
  }
}

/// Accumulates gain/bias gradients; returns d(loss)/dx in `dx`.
template <typename S>
void layer_norm_backward(const Mat<S>& dy, const NormCache<S>& cache, const Mat<S>& gain, Mat<S>& dgain,
                         Mat<S>& dbias, Mat<S>& dx) {
  const Eigen::Index n = dy.rows();
  const Eigen::Index d = dy.cols();
  dx.resize(n, d);
  dgain.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto dxhat = dy.row(r).cwiseProduct(gain.row(0));
    const S mean_dxhat = dxhat.mean();
    const S mean_dot = dxhat.dot(cache.xhat.row(r)) / static_cast<S>(d);
    dx.row(r) = cache.inv_std(r) * (dxhat.array() - mean_dxhat - cache.xhat.row(r).array() * mean_dot).matrix();
  }
}

/// out = x * w + b (b broadcast over rows).
template <typename S>
void affine(const Mat<S>& x, const Mat<S>& w, const Mat<S>& b, Mat<S>& out) {
  out.resize(x.rows(), w.cols());
  out.noalias() = x * w;
  out.rowwise() += b.row(0);
}

template <typename S>
void sinusoid_row(double position, int d, Eigen::Ref<Eigen::Matrix<S, 1, Eigen::Dynamic>> out) {
  const int half = d / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    out(i) = static_cast<S>(std::sin(position * freq));
    out(half + i) = static_cast<S>(std::cos(position * freq));
  }
  if (d % 2 == 1) out(d - 1) = S(0);
}

}  // namespace

template <typename S>
struct BlockCache {
  NormCache<S> attn_norm;
  Mat<S> x1, q, k, v;
  std::vector<Mat<S>> probs;  // channel-major, then head; L x L each
  Mat<S> attended;
  NormCache<S> mix_norm;
  Mat<S> x2, mixed, pre_act, act;
};

template <typename S>
struct ForwardCache {
  int length = 0;
  Mat<S> position;  // L x d time encoding
  Vec<S> value_lane, cond_lane;
  Mat<S> step_embed, step_pre, step_act, step_out;  // 1 x d
  Mat<S> hidden;
  std::vector<BlockCache<S>> blocks;
  NormCache<S> out_norm;
  Mat<S> xf;
  Vec<S> output;
  // scratch for backward
  Mat<S> dh, dtmp, dx, dq, dk, dv, dattended, dprob;
};

template <typename S>
DenoiserWorkspace<S>::DenoiserWorkspace() : cache_(std::make_unique<ForwardCache<S>>()) {}
template <typename S>
DenoiserWorkspace<S>::~DenoiserWorkspace() = default;
template <typename S>
DenoiserWorkspace<S>::DenoiserWorkspace(DenoiserWorkspace&&) noexcept = default;
template <typename S>
DenoiserWorkspace<S>& DenoiserWorkspace<S>::operator=(DenoiserWorkspace&&) noexcept = default;

namespace {

template <typename S>
void forward(const DenoiserParams<S>& p, int L, int step, ForwardCache<S>& c) {
  const int K = p.arch.channels;
  const int d = p.arch.width;
  const int heads = p.arch.heads;
  const int dh = d / heads;
  const Eigen::Index N = static_cast<Eigen::Index>(K) * L;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  if (c.length != L || c.position.cols() != d) {
    c.position.resize(L, d);
    for (int l = 0; l < L; ++l) sinusoid_row<S>(l, d, c.position.row(l));
    c.length = L;
  }

  c.step_embed.resize(1, d);
  sinusoid_row<S>(step, d, c.step_embed.row(0));
  affine(c.step_embed, p.step_w1, p.step_b1, c.step_pre);
  silu(c.step_pre, c.step_act);
  affine(c.step_act, p.step_w2, p.step_b2, c.step_out);

  c.hidden.resize(N, d);
  c.hidden.noalias() = c.value_lane * p.value_proj;
  c.hidden.noalias() += c.cond_lane * p.cond_proj;
  c.hidden.rowwise() += (p.input_bias + c.step_out).row(0);
  for (int k = 0; k < K; ++k) {
    auto rows = c.hidden.middleRows(static_cast<Eigen::Index>(k) * L, L);
    rows += c.position;
    rows.rowwise() += p.channel_embedding.row(k);
  }

  c.blocks.resize(p.blocks.size());
  for (std::size_t r = 0; r < p.blocks.size(); ++r) {
    const auto& b = p.blocks[r];
    auto& bc = c.blocks[r];

    // temporal attention, independently per channel
    layer_norm(c.hidden, b.attn_norm_gain, b.attn_norm_bias, bc.attn_norm, bc.x1);
    affine(bc.x1, b.wq, b.bq, bc.q);
    affine(bc.x1, b.wk, b.bk, bc.k);
    affine(bc.x1, b.wv, b.bv, bc.v);
    bc.probs.resize(static_cast<std::size_t>(K) * heads);
    bc.attended.resize(N, d);
    for (int k = 0; k < K; ++k) {
      for (int h = 0; h < heads; ++h) {
        auto& P = bc.probs[static_cast<std::size_t>(k) * heads + h];
        const auto q = bc.q.block(static_cast<Eigen::Index>(k) * L, h * dh, L, dh);
        const auto kk = bc.k.block(static_cast<Eigen::Index>(k) * L, h * dh, L, dh);
        const auto v = bc.v.block(static_cast<Eigen::Index>(k) * L, h * dh, L, dh);
        P.resize(L, L);
        P.noalias() = q * kk.transpose();
        for (int i = 0; i < L; ++i) {
          auto row = P.row(i);
          row *= scale;
          const S peak = row.maxCoeff();
          row = (row.array() - peak).exp().matrix();
          row /= row.sum();
        }
        bc.attended.block(static_cast<Eigen::Index>(k) * L, h * dh, L, dh).noalias() = P * v;
      }
    }
    c.hidden.noalias() += bc.attended * b.wo;
    c.hidden.rowwise() += b.bo.row(0);

    // feature mixing: K x K across channels, then a per-token MLP
    layer_norm(c.hidden, b.mix_norm_gain, b.mix_norm_bias, bc.mix_norm, bc.x2);
    bc.mixed.resize(N, d);
    {
      Eigen::Map<const Mat<S>> x2v(bc.x2.data(), K, static_cast<Eigen::Index>(L) * d);
      Eigen::Map<Mat<S>> uv(bc.mixed.data(), K, static_cast<Eigen::Index>(L) * d);
      uv.noalias() = b.channel_mix * x2v;
    }
    affine(bc.mixed, b.w1, b.b1, bc.pre_act);
    silu(bc.pre_act, bc.act);
    c.hidden.noalias() += bc.act * b.w2;
    c.hidden.rowwise() += b.b2.row(0);
  }

  layer_norm(c.hidden, p.out_norm_gain, p.out_norm_bias, c.out_norm, c.xf);
  c.output.resize(N);
  c.output.noalias() = c.xf * p.out_w;
  c.output.array() += p.out_b(0, 0);
}

/// Accumulates parameter gradients for d(loss)/d(output) = `grad_out`.
template <typename S>
void backward(const DenoiserParams<S>& p, const Vec<S>& grad_out, ForwardCache<S>& c, DenoiserParams<S>& g) {
  const int K = p.arch.channels;
  const int d = p.arch.width;
  const int heads = p.arch.heads;
  const int dh = d / heads;
  const int L = c.length;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  g.out_w.noalias() += c.xf.transpose() * grad_out;
  g.out_b(0, 0) += grad_out.sum();
  c.dtmp.noalias() = grad_out * p.out_w.transpose();
  layer_norm_backward(c.dtmp, c.out_norm, p.out_norm_gain, g.out_norm_gain, g.out_norm_bias, c.dh);

  for (std::size_t r = p.blocks.size(); r-- > 0;) {
    const auto& b = p.blocks[r];
    auto& gb = g.blocks[r];
    auto& bc = c.blocks[r];

    // feature mixing
    gb.w2.noalias() += bc.act.transpose() * c.dh;
    gb.b2.row(0) += c.dh.colwise().sum();
    c.dtmp.noalias() = c.dh * b.w2.transpose();
    silu_backward(bc.pre_act, c.dtmp);
    gb.w1.noalias() += bc.mixed.transpose() * c.dtmp;
    gb.b1.row(0) += c.dtmp.colwise().sum();
    c.dx.noalias() = c.dtmp * b.w1.transpose();  // d(mixed)
    c.dtmp.resize(c.dx.rows(), c.dx.cols());
    {
      const Eigen::Index cols = static_cast<Eigen::Index>(L) * d;
      Eigen::Map<const Mat<S>> du(c.dx.data(), K, cols);
      Eigen::Map<const Mat<S>> x2v(bc.x2.data(), K, cols);
      Eigen::Map<Mat<S>> dx2v(c.dtmp.data(), K, cols);
      gb.channel_mix.noalias() += du * x2v.transpose();
      dx2v.noalias() = b.channel_mix.transpose() * du;
    }
    layer_norm_backward(c.dtmp, bc.mix_norm, b.mix_norm_gain, gb.mix_norm_gain, gb.mix_norm_bias, c.dx);
    c.dh += c.dx;

    // attention
    gb.wo.noalias() += bc.attended.transpose() * c.dh;
    gb.bo.row(0) += c.dh.colwise().sum();
    c.dattended.noalias() = c.dh * b.wo.transpose();
    c.dq.resize(c.dh.rows(), d);
    c.dk.resize(c.dh.rows(), d);
    c.dv.resize(c.dh.rows(), d);
    for (int k = 0; k < K; ++k) {
      for (int h = 0; h < heads; ++h) {
        const auto& P = bc.probs[static_cast<std::size_t>(k) * heads + h];
        const Eigen::Index row0 = static_cast<Eigen::Index>(k) * L;
        const auto q = bc.q.block(row0, h * dh, L, dh);
        const auto kk = bc.k.block(row0, h * dh, L, dh);
        const auto v = bc.v.block(row0, h * dh, L, dh);
        const auto da = c.dattended.block(row0, h * dh, L, dh);
        c.dv.block(row0, h * dh, L, dh).noalias() = P.transpose() * da;
        c.dprob.resize(L, L);
        c.dprob.noalias() = da * v.transpose();
        // softmax backward, with the 1/sqrt(dh) score scale folded in
        for (int i = 0; i < L; ++i) {
          auto dp = c.dprob.row(i);
          const S dot = dp.dot(P.row(i));
          dp = (P.row(i).array() * (dp.array() - dot)).matrix() * scale;
        }
        c.dq.block(row0, h * dh, L, dh).noalias() = c.dprob * kk;
        c.dk.block(row0, h * dh, L, dh).noalias() = c.dprob.transpose() * q;
      }
    }
    gb.wq.noalias() += bc.x1.transpose() * c.dq;
    gb.bq.row(0) += c.dq.colwise().sum();
    gb.wk.noalias() += bc.x1.transpose() * c.dk;
    gb.bk.row(0) += c.dk.colwise().sum();
    gb.wv.noalias() += bc.x1.transpose() * c.dv;
    gb.bv.row(0) += c.dv.colwise().sum();
    c.dtmp.noalias() = c.dq * b.wq.transpose();
    c.dtmp.noalias() += c.dk * b.wk.transpose();
    c.dtmp.noalias() += c.dv * b.wv.transpose();
    layer_norm_backward(c.dtmp, bc.attn_norm, b.attn_norm_gain, gb.attn_norm_gain, gb.attn_norm_bias, c.dx);
    c.dh += c.dx;
  }

  // input embedding
  g.value_proj.noalias() += c.value_lane.transpose() * c.dh;
  g.cond_proj.noalias() += c.cond_lane.transpose() * c.dh;
  const Mat<S> dstep = c.dh.colwise().sum();
  g.input_bias += dstep;
  for (int k = 0; k < K; ++k) {
    g.channel_embedding.row(k) += c.dh.middleRows(static_cast<Eigen::Index>(k) * L, L).colwise().sum();
  }
  g.step_w2.noalias() += c.step_act.transpose() * dstep;
  g.step_b2 += dstep;
  Mat<S> dpre = dstep * p.step_w2.transpose();
  silu_backward(c.step_pre, dpre);
  g.step_w1.noalias() += c.step_embed.transpose() * dpre;
  g.step_b1 += dpre;
}

/// Fills the two input lanes; returns the row index of every target.
template <typename S>
std::vector<Eigen::Index> prepare_inputs(const DenoiserParams<S>& p, const TimeSeriesWindow& window, const Mask& mask,
                                         std::span<const S> noisy, int step, ForwardCache<S>& c) {
  const int K = window.channel_count();
  const int L = window.length();
  if (K != p.arch.channels) {
    throw Error(Errc::ShapeMismatch, "window has " + std::to_string(K) + " channels, model expects " +
                                         std::to_string(p.arch.channels));
  }
  if (mask.target.rows() != K || mask.target.cols() != L) throw Error(Errc::ShapeMismatch, "mask/window shape mismatch");
  if (step < 1 || step > p.arch.diffusion_steps) {
    throw Error(Errc::StepOutOfRange, "step " + std::to_string(step) + " outside [1, " +
                                          std::to_string(p.arch.diffusion_steps) + "]");
  }
  const Eigen::Index N = static_cast<Eigen::Index>(K) * L;
  c.value_lane.resize(N);
  c.cond_lane.resize(N);
  std::vector<Eigen::Index> targets;
  targets.reserve(noisy.size());
  for (int k = 0; k < K; ++k) {
    for (int l = 0; l < L; ++l) {
      const Eigen::Index r = static_cast<Eigen::Index>(k) * L + l;
      if (mask.target(k, l)) {
        if (targets.size() >= noisy.size()) break;
        c.value_lane(r) = noisy[targets.size()];
        c.cond_lane(r) = S(0);
        targets.push_back(r);
      } else if (window.observed(k, l)) {
        c.value_lane(r) = static_cast<S>(window.values(k, l));
        c.cond_lane(r) = S(1);
      } else {
        c.value_lane(r) = S(0);
        c.cond_lane(r) = S(0);
      }
    }
  }
  if (targets.size() != noisy.size() || static_cast<int>(targets.size()) != mask.count()) {
    throw Error(Errc::ShapeMismatch, "noisy vector has " + std::to_string(noisy.size()) + " values for " +
                                         std::to_string(mask.count()) + " targets");
  }
  return targets;
}

template <typename S>
void zero_like(const DenoiserParams<S>& params, DenoiserParams<S>& grads) {
  if (grads.arch == params.arch && !grads.blocks.empty()) {
    for (auto& [name, m] : grads.tensors()) m->setZero();
  } else {
    grads = DenoiserParams<S>::zeros(params.arch);
  }
}

template <typename S>
S batch_loss(const DenoiserParams<S>& params, std::span<const TrainingExample<S>> batch, DenoiserParams<S>* grads,
             DenoiserWorkspace<S>& workspace) {
  if (batch.empty()) throw Error(Errc::EmptyInput, "empty batch");
  if (grads) zero_like(params, *grads);
  auto& c = workspace.cache();
  const S inv_batch = S(1) / static_cast<S>(batch.size());
  S total = S(0);
  for (const auto& ex : batch) {
    if (ex.mask->empty()) throw Error(Errc::EmptyTarget, "training example without targets");
    if (ex.noise.size() != ex.noisy.size()) throw Error(Errc::ShapeMismatch, "noise/noisy length mismatch");
    const auto targets = prepare_inputs(params, *ex.window, *ex.mask, std::span<const S>(ex.noisy), ex.step, c);
    forward(params, ex.window->length(), ex.step, c);
    const S inv_n = S(1) / static_cast<S>(targets.size());
    S sq = S(0);
    Vec<S> grad_out;
    if (grads) grad_out = Vec<S>::Zero(c.output.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const S diff = c.output(targets[i]) - ex.noise[i];
      sq += diff * diff;
      if (grads) grad_out(targets[i]) = S(2) * diff * inv_n * inv_batch;
    }
    total += sq * inv_n * inv_batch;
    if (grads) backward(params, grad_out, c, *grads);
  }
  return total;
}

}  // namespace

template <typename S>
std::vector<S> predict_noise(const DenoiserParams<S>& params, const TimeSeriesWindow& window, const Mask& mask,
                             std::span<const S> noisy, int step, DenoiserWorkspace<S>& workspace) {
  auto& c = workspace.cache();
  const auto targets = prepare_inputs(params, window, mask, noisy, step, c);
  forward(params, window.length(), step, c);
  std::vector<S> out(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) out[i] = c.output(targets[i]);
  return out;
}

template <typename S>
std::vector<S> predict_noise(const DenoiserParams<S>& params, const TimeSeriesWindow& window, const Mask& mask,
                             std::span<const S> noisy, int step) {
  DenoiserWorkspace<S> workspace;
  return predict_noise(params, window, mask, noisy, step, workspace);
}

template <typename S>
S loss_and_grad(const DenoiserParams<S>& params, std::span<const TrainingExample<S>> batch, DenoiserParams<S>& grads,
                DenoiserWorkspace<S>& workspace) {
  return batch_loss(params, batch, &grads, workspace);
}

template <typename S>
S loss_only(const DenoiserParams<S>& params, std::span<const TrainingExample<S>> batch,
            DenoiserWorkspace<S>& workspace) {
  return batch_loss<S>(params, batch, nullptr, workspace);
}

// ---------------------------------------------------------------------------
// Adam

template <typename S>
OptimizerState<S> make_optimizer(const DenoiserParams<S>& params, double learning_rate) {
  OptimizerState<S> state;
  state.first_moment = DenoiserParams<S>::zeros(params.arch);
  state.second_moment = DenoiserParams<S>::zeros(params.arch);
  state.learning_rate = learning_rate;
  return state;
}

template <typename S>
void optimizer_step(DenoiserParams<S>& params, const DenoiserParams<S>& grads, OptimizerState<S>& state) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto m = state.first_moment.tensors();
  auto v = state.second_moment.tensors();
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
    throw Error(Errc::ShapeMismatch, "optimizer tensors do not match parameters");
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto rows = p[i].second->rows();
    const auto cols = p[i].second->cols();
    for (const auto* other : {g[i].second, static_cast<const Mat<S>*>(m[i].second),
                              static_cast<const Mat<S>*>(v[i].second)}) {
      if (other->rows() != rows || other->cols() != cols) {
        throw Error(Errc::ShapeMismatch, "shape mismatch at tensor " + p[i].first);
      }
    }
  }

  ++state.step;
  const double correction1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const S b1 = static_cast<S>(state.beta1);
  const S b2 = static_cast<S>(state.beta2);
  const S step_size = static_cast<S>(state.learning_rate / correction1);
  const S inv_sqrt_c2 = static_cast<S>(1.0 / std::sqrt(correction2));
  const S eps = static_cast<S>(state.epsilon);
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto pa = p[i].second->array();
    auto ma = m[i].second->array();
    auto va = v[i].second->array();
    const auto ga = g[i].second->array();
    ma = b1 * ma + (S(1) - b1) * ga;
    va = b2 * va + (S(1) - b2) * ga.square();
    pa -= step_size * ma / (va.sqrt() * inv_sqrt_c2 + eps);
  }
}

#define HYDROCAST_INSTANTIATE(S)                                                                                  \
  template struct DenoiserParams<S>;                                                                              \
  template class DenoiserWorkspace<S>;                                                                            \
  template DenoiserParams<S> init_params<S>(const Architecture&, std::uint64_t);                                  \
  template std::vector<S> predict_noise<S>(const DenoiserParams<S>&, const TimeSeriesWindow&, const Mask&,        \
                                           std::span<const S>, int, DenoiserWorkspace<S>&);                       \
  template std::vector<S> predict_noise<S>(const DenoiserParams<S>&, const TimeSeriesWindow&, const Mask&,        \
                                           std::span<const S>, int);                                              \
  template S loss_and_grad<S>(const DenoiserParams<S>&, std::span<const TrainingExample<S>>, DenoiserParams<S>&,  \
                              DenoiserWorkspace<S>&);                                                             \
  template S loss_only<S>(const DenoiserParams<S>&, std::span<const TrainingExample<S>>, DenoiserWorkspace<S>&);  \
  template OptimizerState<S> make_optimizer<S>(const DenoiserParams<S>&, double);                                 \
  template void optimizer_step<S>(DenoiserParams<S>&, const DenoiserParams<S>&, OptimizerState<S>&);

HYDROCAST_INSTANTIATE(float)
HYDROCAST_INSTANTIATE(double)

#undef HYDROCAST_INSTANTIATE

}  // namespace hydrocast
