#include "uwbrl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace uwbrl::nn {

namespace {

// Default PyTorch initialisation for conv/linear layers: U(-1/sqrt(fan_in), +).
void uniform_bound_init(Matrix& m, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
    }
}

void uniform_init(Matrix& m, int fan_in, Rng& rng) {
    uniform_bound_init(m, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

// Output layers start near zero so initial corrections and Q estimates are
// small instead of carrying a large random offset.
constexpr double kOutputInitBound = 3e-3;

void init_output_layer(Sequential& net, const std::string& layer, Rng& rng) {
    for (Param* p : net.params()) {
        if (p->name == layer + ".weight" || p->name == layer + ".bias") uniform_bound_init(p->value, kOutputInitBound, rng);
    }
}

Param make_param(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    return Param{name, Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)};
}

void require(bool ok, const char* what) {
    if (!ok) throw ShapeMismatch(what);
}

}  // namespace

// Conv1d ---------------------------------------------------------------------

Conv1d::Conv1d(std::string name, int in_channels, int out_channels, int kernel)
    : Layer(name), in_(in_channels), out_(out_channels), kernel_(kernel) {
    weight_ = make_param(name + ".weight", out_, kernel_ * in_);
    bias_ = make_param(name + ".bias", out_, 1);
}

void Conv1d::reset_parameters(Rng& rng) {
    uniform_init(weight_.value, kernel_ * in_, rng);
    uniform_init(bias_.value, kernel_ * in_, rng);
}

Tensor Conv1d::forward(const Tensor& x, const Context&) {
    require(x.channels() == in_, "conv input channels");
    const int len = x.length;
    const int batch = x.batch();
    const int pad = pad_left();
    length_ = len;
    cols_.setZero(static_cast<Eigen::Index>(kernel_) * in_, static_cast<Eigen::Index>(batch) * len);
    for (int b = 0; b < batch; ++b) {
        const Eigen::Index base = static_cast<Eigen::Index>(b) * len;
        for (int k = 0; k < kernel_; ++k) {
            // Output positions l whose source l + k - pad lies inside the sample.
            const int lo = std::max(0, pad - k);
            const int hi = std::min(len, len + pad - k);
            if (hi <= lo) continue;
            cols_.block(static_cast<Eigen::Index>(k) * in_, base + lo, in_, hi - lo) =
                x.data.middleCols(base + lo + k - pad, hi - lo);
        }
    }
    Tensor y{weight_.value * cols_, len};
    y.data.colwise() += bias_.value.col(0);
    return y;
}

Tensor Conv1d::backward(const Tensor& grad, bool need_input_grad) {
    weight_.grad.noalias() = grad.data * cols_.transpose();
    bias_.grad = grad.data.rowwise().sum();
    if (!need_input_grad) return {};
    const Matrix dcols = weight_.value.transpose() * grad.data;
    const int len = length_;
    const int batch = static_cast<int>(grad.data.cols()) / len;
    const int pad = pad_left();
    Tensor dx{Matrix::Zero(in_, grad.data.cols()), len};
    for (int b = 0; b < batch; ++b) {
        const Eigen::Index base = static_cast<Eigen::Index>(b) * len;
        for (int k = 0; k < kernel_; ++k) {
            const int lo = std::max(0, pad - k);
            const int hi = std::min(len, len + pad - k);
            if (hi <= lo) continue;
            dx.data.middleCols(base + lo + k - pad, hi - lo) +=
                dcols.block(static_cast<Eigen::Index>(k) * in_, base + lo, in_, hi - lo);
        }
    }
    return dx;
}

// Dense ----------------------------------------------------------------------

Dense::Dense(std::string name, int in_features, int out_features) : Layer(name) {
    weight_ = make_param(name + ".weight", out_features, in_features);
    bias_ = make_param(name + ".bias", out_features, 1);
}

void Dense::reset_parameters(Rng& rng) {
    const auto fan_in = static_cast<int>(weight_.value.cols());
    uniform_init(weight_.value, fan_in, rng);
    uniform_init(bias_.value, fan_in, rng);
}

Tensor Dense::forward(const Tensor& x, const Context&) {
    require(x.length == 1 && x.data.rows() == weight_.value.cols(), "dense input features");
    input_ = x.data;
    Tensor y{weight_.value * x.data, 1};
    y.data.colwise() += bias_.value.col(0);
    return y;
}

Tensor Dense::backward(const Tensor& grad, bool need_input_grad) {
    weight_.grad.noalias() = grad.data * input_.transpose();
    bias_.grad = grad.data.rowwise().sum();
    if (!need_input_grad) return {};
    return Tensor{weight_.value.transpose() * grad.data, 1};
}

// BatchNorm ------------------------------------------------------------------

BatchNorm::BatchNorm(std::string name, int channels, double eps, double momentum)
    : Layer(name), eps_(eps), momentum_(momentum) {
    gamma_ = make_param(name + ".weight", channels, 1);
    gamma_.value.setOnes();
    beta_ = make_param(name + ".bias", channels, 1);
    running_mean_ = Buffer{name + ".running_mean", Matrix::Zero(channels, 1)};
    running_var_ = Buffer{name + ".running_var", Matrix::Ones(channels, 1)};
}

Tensor BatchNorm::forward(const Tensor& x, const Context& ctx) {
    require(x.data.rows() == gamma_.value.rows(), "batch-norm channels");
    cached_training_ = ctx.training;
    const auto n = static_cast<double>(x.data.cols());
    Eigen::ArrayXd mean;
    Eigen::ArrayXd var;
    if (ctx.training) {
        mean = x.data.rowwise().mean().array();
        const Matrix centered = x.data.colwise() - mean.matrix();
        var = centered.array().square().rowwise().sum() / n;
        if (n > 1.0) {
            running_mean_.value = (1.0 - momentum_) * running_mean_.value + momentum_ * mean.matrix();
            running_var_.value = (1.0 - momentum_) * running_var_.value + momentum_ * (var * (n / (n - 1.0))).matrix();
        }
    } else {
        mean = running_mean_.value.col(0).array();
        var = running_var_.value.col(0).array();
    }
    inv_std_ = (var + eps_).rsqrt();
    xhat_ = (x.data.colwise() - mean.matrix()).array().colwise() * inv_std_;
    Tensor y{(xhat_.array().colwise() * gamma_.value.col(0).array()).matrix(), x.length};
    y.data.colwise() += beta_.value.col(0);
    return y;
}

Tensor BatchNorm::backward(const Tensor& grad, bool need_input_grad) {
    gamma_.grad = (grad.data.array() * xhat_.array()).rowwise().sum().matrix();
    beta_.grad = grad.data.rowwise().sum();
    if (!need_input_grad) return {};
    const Eigen::ArrayXd scale = gamma_.value.col(0).array() * inv_std_;
    if (!cached_training_) {
        return Tensor{(grad.data.array().colwise() * scale).matrix(), grad.length};
    }
    const Eigen::ArrayXd mean_grad = grad.data.rowwise().mean().array();
    const Eigen::ArrayXd mean_grad_xhat = (grad.data.array() * xhat_.array()).rowwise().mean();
    Matrix dx = ((grad.data.array().colwise() - mean_grad) - (xhat_.array().colwise() * mean_grad_xhat)).matrix();
    dx = (dx.array().colwise() * scale).matrix();
    return Tensor{std::move(dx), grad.length};
}

// Elementwise ----------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x, const Context&) {
    input_ = x.data;
    return Tensor{x.data.cwiseMax(0.0), x.length};
}

Tensor ReLU::backward(const Tensor& grad, bool need_input_grad) {
    if (!need_input_grad) return {};
    return Tensor{(input_.array() > 0.0).select(grad.data, 0.0), grad.length};
}

Tensor Sigmoid::forward(const Tensor& x, const Context&) {
    output_ = (1.0 + (-x.data.array()).exp()).inverse().matrix();
    return Tensor{output_, x.length};
}

Tensor Sigmoid::backward(const Tensor& grad, bool need_input_grad) {
    if (!need_input_grad) return {};
    return Tensor{(grad.data.array() * output_.array() * (1.0 - output_.array())).matrix(), grad.length};
}

Tensor Tanh::forward(const Tensor& x, const Context&) {
    output_ = x.data.array().tanh().matrix();
    return Tensor{output_, x.length};
}

Tensor Tanh::backward(const Tensor& grad, bool need_input_grad) {
    if (!need_input_grad) return {};
    return Tensor{(grad.data.array() * (1.0 - output_.array().square())).matrix(), grad.length};
}

Tensor Scale::forward(const Tensor& x, const Context&) { return Tensor{x.data * factor_, x.length}; }

Tensor Scale::backward(const Tensor& grad, bool need_input_grad) {
    if (!need_input_grad) return {};
    return Tensor{grad.data * factor_, grad.length};
}

// MaxPool2 -------------------------------------------------------------------

Tensor MaxPool2::forward(const Tensor& x, const Context&) {
    in_length_ = x.length;
    const int out_len = x.length / 2;
    const int batch = x.batch();
    Tensor y{Matrix(x.data.rows(), static_cast<Eigen::Index>(batch) * out_len), out_len};
    pick_.resize(x.data.rows(), y.data.cols());
    for (int b = 0; b < batch; ++b) {
        for (int l = 0; l < out_len; ++l) {
            const Eigen::Index src = static_cast<Eigen::Index>(b) * x.length + 2 * l;
            const Eigen::Index dst = static_cast<Eigen::Index>(b) * out_len + l;
            for (Eigen::Index c = 0; c < x.data.rows(); ++c) {
                const double a = x.data(c, src);
                const double d = x.data(c, src + 1);
                const bool second = d > a;
                y.data(c, dst) = second ? d : a;
                pick_(c, dst) = second ? 1 : 0;
            }
        }
    }
    return y;
}

Tensor MaxPool2::backward(const Tensor& grad, bool need_input_grad) {
    if (!need_input_grad) return {};
    const int out_len = grad.length;
    const int batch = grad.batch();
    Tensor dx{Matrix::Zero(grad.data.rows(), static_cast<Eigen::Index>(batch) * in_length_), in_length_};
    for (int b = 0; b < batch; ++b) {
        for (int l = 0; l < out_len; ++l) {
            const Eigen::Index src = static_cast<Eigen::Index>(b) * in_length_ + 2 * l;
            const Eigen::Index dst = static_cast<Eigen::Index>(b) * out_len + l;
            for (Eigen::Index c = 0; c < grad.data.rows(); ++c) dx.data(c, src + pick_(c, dst)) = grad.data(c, dst);
        }
    }
    return dx;
}

// Dropout --------------------------------------------------------------------

Tensor Dropout::forward(const Tensor& x, const Context& ctx) {
    active_ = ctx.training && rate_ > 0.0;
    if (!active_) return x;
    if (ctx.rng == nullptr) throw InvalidArgument("dropout in training mode needs an rng");
    const double keep = 1.0 - rate_;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    mask_.resize(x.data.rows(), x.data.cols());
    for (Eigen::Index j = 0; j < mask_.cols(); ++j) {
        for (Eigen::Index i = 0; i < mask_.rows(); ++i) mask_(i, j) = u(*ctx.rng) < keep ? 1.0 / keep : 0.0;
    }
    return Tensor{x.data.cwiseProduct(mask_), x.length};
}

Tensor Dropout::backward(const Tensor& grad, bool need_input_grad) {
    if (!need_input_grad) return {};
    if (!active_) return grad;
    return Tensor{grad.data.cwiseProduct(mask_), grad.length};
}

// Flatten --------------------------------------------------------------------

Tensor Flatten::forward(const Tensor& x, const Context&) {
    channels_ = x.channels();
    length_ = x.length;
    const int batch = x.batch();
    Tensor y{Matrix(static_cast<Eigen::Index>(channels_) * length_, batch), 1};
    for (int b = 0; b < batch; ++b) {
        // Column-major block (C, L) read row by row gives index c * L + l.
        const auto block = x.data.middleCols(static_cast<Eigen::Index>(b) * length_, length_);
        Eigen::Map<Matrix>(y.data.col(b).data(), length_, channels_) = block.transpose();
    }
    return y;
}

Tensor Flatten::backward(const Tensor& grad, bool need_input_grad) {
    if (!need_input_grad) return {};
    const int batch = static_cast<int>(grad.data.cols());
    Tensor dx{Matrix(channels_, static_cast<Eigen::Index>(batch) * length_), length_};
    for (int b = 0; b < batch; ++b) {
        Eigen::Map<const Matrix> g(grad.data.col(b).data(), length_, channels_);
        dx.data.middleCols(static_cast<Eigen::Index>(b) * length_, length_) = g.transpose();
    }
    return dx;
}

// Sequential -----------------------------------------------------------------

Sequential::Sequential(const Sequential& other) {
    layers_.reserve(other.layers_.size());
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
    if (this != &other) {
        Sequential copy(other);
        layers_ = std::move(copy.layers_);
    }
    return *this;
}

Tensor Sequential::forward(Tensor x, const Context& ctx) {
    for (auto& l : layers_) x = l->forward(x, ctx);
    return x;
}

Tensor Sequential::backward(Tensor grad, bool need_input_grad) {
    for (std::size_t i = layers_.size(); i-- > 0;) {
        grad = layers_[i]->backward(grad, need_input_grad || i > 0);
    }
    return grad;
}

void Sequential::reset_parameters(Rng& rng) {
    for (auto& l : layers_) l->reset_parameters(rng);
}

std::vector<Param*> Sequential::params() {
    std::vector<Param*> out;
    for (auto& l : layers_) {
        for (auto* p : l->params()) out.push_back(p);
    }
    return out;
}

std::vector<Buffer*> Sequential::buffers() {
    std::vector<Buffer*> out;
    for (auto& l : layers_) {
        for (auto* b : l->buffers()) out.push_back(b);
    }
    return out;
}

// Networks -------------------------------------------------------------------

NetworkShape NetworkShape::scaled(double scale) {
    if (!(scale > 0.0) || scale > 1.0) throw ConfigError("scale must lie in (0, 1]");
    NetworkShape s;
    auto shrink = [scale](int w) { return std::max(1, static_cast<int>(std::lround(w * scale))); };
    for (auto& c : s.conv_channels) c = shrink(c);
    for (auto& w : s.dense_widths) w = shrink(w);
    return s;
}

namespace {

void build_trunk(Sequential& net, const NetworkShape& s, const std::string& prefix) {
    const auto& ch = s.conv_channels;
    const auto& k = s.conv_kernels;
    const auto& d = s.dense_widths;
    net.add<Conv1d>(prefix + "conv1", 1, ch[0], k[0]);
    net.add<ReLU>();
    net.add<MaxPool2>();
    net.add<Conv1d>(prefix + "conv2", ch[0], ch[1], k[1]);
    net.add<ReLU>();
    net.add<Conv1d>(prefix + "conv3", ch[1], ch[2], k[2]);
    net.add<ReLU>();
    net.add<BatchNorm>(prefix + "bn1", ch[2]);
    net.add<Dropout>(s.dropout[0]);
    net.add<Flatten>();
    net.add<Dense>(prefix + "dense1", s.flattened(), d[0]);
    net.add<ReLU>();
    net.add<BatchNorm>(prefix + "bn2", d[0]);
    net.add<Dropout>(s.dropout[1]);
    net.add<Dense>(prefix + "dense2", d[0], d[1]);
    net.add<ReLU>();
    net.add<Dropout>(s.dropout[2]);
    net.add<Dense>(prefix + "dense3", d[1], d[2]);
    net.add<ReLU>();
    net.add<Dropout>(s.dropout[3]);
    net.add<Dense>(prefix + "dense4", d[2], d[3]);
    net.add<Sigmoid>();
}

void zero_params(Sequential& net) {
    for (auto* p : net.params()) p->value.setZero();
    for (auto* b : net.buffers()) {
        if (b->name.size() >= 12 && b->name.compare(b->name.size() - 12, 12, ".running_var") == 0) {
            b->value.setOnes();
        } else {
            b->value.setZero();
        }
    }
}

Tensor as_input(const Matrix& states, int input_length) {
    if (states.rows() != input_length) throw ShapeMismatch("state windows have the wrong length");
    Tensor x{Matrix(1, states.size()), input_length};
    x.data = Eigen::Map<const Matrix>(states.data(), 1, states.size());
    return x;
}

}  // namespace

ActorNet::ActorNet(const NetworkShape& shape, OutputHead head, Rng& rng) : shape_(shape), head_(head) {
    build_trunk(net_, shape_, "");
    net_.add<Dense>("out", shape_.dense_widths[3], 1);
    if (head_ == OutputHead::TanhScaled) {
        net_.add<Tanh>();
        net_.add<Scale>(kActionLimitMm);
    }
    net_.reset_parameters(rng);
    init_output_layer(net_, "out", rng);
}

ActorNet ActorNet::zeros(const NetworkShape& shape, OutputHead head) {
    Rng rng(0);
    ActorNet a(shape, head, rng);
    zero_params(a.net_);
    return a;
}

Vector ActorNet::forward(const Matrix& states, const Context& ctx) {
    const Tensor y = net_.forward(as_input(states, shape_.input_length), ctx);
    return y.data.row(0).transpose();
}

void ActorNet::backward(const Vector& grad_output) {
    net_.backward(Tensor{grad_output.transpose(), 1}, false);
}

CriticNet::CriticNet(const NetworkShape& shape, Rng& rng) : shape_(shape) {
    build_trunk(trunk_, shape_, "");
    trunk_.add<Dense>("latent", shape_.dense_widths[3], shape_.critic_latent);
    trunk_.add<ReLU>();
    const auto& h = shape_.critic_head;
    head_.add<Dense>("head1", shape_.critic_latent + 1, h[0]);
    head_.add<ReLU>();
    head_.add<Dense>("head2", h[0], h[1]);
    head_.add<ReLU>();
    head_.add<Dense>("head3", h[1], h[2]);
    head_.add<ReLU>();
    head_.add<Dense>("q", h[2], 1);
    head_.add<Tanh>();
    trunk_.reset_parameters(rng);
    head_.reset_parameters(rng);
    init_output_layer(head_, "q", rng);
}

CriticNet CriticNet::zeros(const NetworkShape& shape) {
    Rng rng(0);
    CriticNet c(shape, rng);
    zero_params(c.trunk_);
    zero_params(c.head_);
    return c;
}

Vector CriticNet::forward(const Matrix& states, const Vector& actions_mm, const Context& ctx) {
    if (actions_mm.size() != states.cols()) throw ShapeMismatch("one action per state required");
    const Tensor z = trunk_.forward(as_input(states, shape_.input_length), ctx);
    Tensor joined{Matrix(z.data.rows() + 1, z.data.cols()), 1};
    joined.data.topRows(z.data.rows()) = z.data;
    joined.data.bottomRows(1) = actions_mm.transpose() / shape_.critic_action_unit_mm;
    return head_.forward(std::move(joined), ctx).data.row(0).transpose();
}

Vector CriticNet::backward(const Vector& grad_q, bool full) {
    const Tensor g = head_.backward(Tensor{grad_q.transpose(), 1}, true);
    const Eigen::Index latent = g.data.rows() - 1;
    if (full) trunk_.backward(Tensor{g.data.topRows(latent), 1}, false);
    return g.data.bottomRows(1).transpose() / shape_.critic_action_unit_mm;
}

std::vector<Param*> CriticNet::params() {
    auto out = trunk_.params();
    for (auto* p : head_.params()) out.push_back(p);
    return out;
}

std::vector<Buffer*> CriticNet::buffers() {
    auto out = trunk_.buffers();
    for (auto* b : head_.buffers()) out.push_back(b);
    return out;
}

Matrix stack_states(const std::vector<const PreprocessedCir*>& cirs) {
    Matrix out(kWindowLength, static_cast<Eigen::Index>(cirs.size()));
    for (std::size_t j = 0; j < cirs.size(); ++j) {
        out.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Vector>(cirs[j]->values.data(), kWindowLength);
    }
    return out;
}

// Optimiser ------------------------------------------------------------------

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::reset_state() {
    t_ = 0;
    m_.clear();
    v_.clear();
}

void Adam::step(const std::vector<Param*>& params) {
    if (m_.empty()) {
        for (auto* p : params) {
            m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
            v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
        }
    }
    if (m_.size() != params.size()) throw ShapeMismatch("optimizer bound to a different parameter set");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param& p = *params[i];
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseAbs2();
        const auto denom = (v_[i].array() / c2).sqrt() + eps_;
        p.value.array() -= lr_ * (m_[i].array() / c1) / denom;
    }
}

void soft_update(Matrix& target, const Matrix& source, double tau) {
    if (target.rows() != source.rows() || target.cols() != source.cols()) {
        throw ShapeMismatch("soft update between tensors of different shape");
    }
    target = tau * source + (1.0 - tau) * target;
}

}  // namespace uwbrl::nn
