#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "uwbrl/cir.hpp"
#include "uwbrl/error.hpp"

namespace uwbrl::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Activations are (channels, batch * length); sample b owns the columns
// [b * length, (b + 1) * length). Dense layers use length 1.
struct Tensor {
    Matrix data;
    int length = 1;

    int channels() const { return static_cast<int>(data.rows()); }
    int batch() const { return static_cast<int>(data.cols()) / length; }
};

struct Context {
    bool training = false;  // dropout active, batch-norm uses batch statistics
    Rng* rng = nullptr;     // required when training with dropout
};

struct Param {
    std::string name;
    Matrix value;
    Matrix grad;
};

// Non-trainable state (batch-norm running statistics).
struct Buffer {
    std::string name;
    Matrix value;
};

class Layer {
public:
    explicit Layer(std::string name = {}) : name_(std::move(name)) {}
    virtual ~Layer() = default;

    virtual Tensor forward(const Tensor& x, const Context& ctx) = 0;
    // Writes parameter gradients of the last forward pass; returns the input
    // gradient (empty when need_input_grad is false).
    virtual Tensor backward(const Tensor& grad, bool need_input_grad) = 0;
    virtual std::unique_ptr<Layer> clone() const = 0;
    virtual void reset_parameters(Rng&) {}

    virtual std::vector<Param*> params() { return {}; }
    virtual std::vector<Buffer*> buffers() { return {}; }
    const std::string& name() const { return name_; }

private:
    std::string name_;
};

class Conv1d : public Layer {
public:
    Conv1d(std::string name, int in_channels, int out_channels, int kernel);
    Tensor forward(const Tensor& x, const Context& ctx) override;
    Tensor backward(const Tensor& grad, bool need_input_grad) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv1d>(*this); }
    void reset_parameters(Rng& rng) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }

    int pad_left() const { return (kernel_ - 1) / 2; }

private:
    int in_, out_, kernel_;
    Param weight_;  // (out, kernel * in), column index k * in + c
    Param bias_;
    Matrix cols_;
    int length_ = 0;
};

class Dense : public Layer {
public:
    Dense(std::string name, int in_features, int out_features);
    Tensor forward(const Tensor& x, const Context& ctx) override;
    Tensor backward(const Tensor& grad, bool need_input_grad) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }
    void reset_parameters(Rng& rng) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }

private:
    Param weight_;
    Param bias_;
    Matrix input_;
};

class BatchNorm : public Layer {
public:
    BatchNorm(std::string name, int channels, double eps = 1e-5, double momentum = 0.1);
    Tensor forward(const Tensor& x, const Context& ctx) override;
    Tensor backward(const Tensor& grad, bool need_input_grad) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }
    std::vector<Param*> params() override { return {&gamma_, &beta_}; }
    std::vector<Buffer*> buffers() override { return {&running_mean_, &running_var_}; }

private:
    double eps_, momentum_;
    Param gamma_, beta_;
    Buffer running_mean_, running_var_;
    Matrix xhat_;
    Eigen::ArrayXd inv_std_;
    bool cached_training_ = false;
};

class ReLU : public Layer {
public:
    Tensor forward(const Tensor& x, const Context& ctx) override;
    Tensor backward(const Tensor& grad, bool need_input_grad) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }

private:
    Matrix input_;
};

class Sigmoid : public Layer {
public:
    Tensor forward(const Tensor& x, const Context& ctx) override;
    Tensor backward(const Tensor& grad, bool need_input_grad) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Sigmoid>(*this); }

private:
    Matrix output_;
};

class Tanh : public Layer {
public:
    Tensor forward(const Tensor& x, const Context& ctx) override;
    Tensor backward(const Tensor& grad, bool need_input_grad) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Tanh>(*this); }

private:
    Matrix output_;
};

class Scale : public Layer {
public:
    explicit Scale(double factor) : factor_(factor) {}
    Tensor forward(const Tensor& x, const Context& ctx) override;
    Tensor backward(const Tensor& grad, bool need_input_grad) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Scale>(*this); }

private:
    double factor_;
};

class MaxPool2 : public Layer {
public:
    Tensor forward(const Tensor& x, const Context& ctx) override;
    Tensor backward(const Tensor& grad, bool need_input_grad) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool2>(*this); }

private:
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> pick_;
    int in_length_ = 0;
};

// Inverted dropout.
class Dropout : public Layer {
public:
    explicit Dropout(double rate) : rate_(rate) {}
    Tensor forward(const Tensor& x, const Context& ctx) override;
    Tensor backward(const Tensor& grad, bool need_input_grad) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Dropout>(*this); }

private:
    double rate_;
    Matrix mask_;
    bool active_ = false;
};

// (C, B * L) -> (C * L, B), feature index c * L + l.
class Flatten : public Layer {
public:
    Tensor forward(const Tensor& x, const Context& ctx) override;
    Tensor backward(const Tensor& grad, bool need_input_grad) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }

private:
    int channels_ = 0;
    int length_ = 0;
};

class Sequential {
public:
    Sequential() = default;
    Sequential(const Sequential& other);
    Sequential& operator=(const Sequential& other);
    Sequential(Sequential&&) noexcept = default;
    Sequential& operator=(Sequential&&) noexcept = default;

    template <class L, class... Args>
    void add(Args&&... args) {
        layers_.push_back(std::make_unique<L>(std::forward<Args>(args)...));
    }

    Tensor forward(Tensor x, const Context& ctx);
    Tensor backward(Tensor grad, bool need_input_grad);

    void reset_parameters(Rng& rng);
    std::vector<Param*> params();
    std::vector<Buffer*> buffers();
    std::size_t size() const { return layers_.size(); }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

struct NetworkShape {
    int input_length = kWindowLength;
    std::array<int, 3> conv_channels{128, 64, 32};
    std::array<int, 3> conv_kernels{16, 8, 2};
    std::array<int, 4> dense_widths{150, 100, 50, 25};
    std::array<double, 4> dropout{0.25, 0.2, 0.2, 0.1};
    int critic_latent = 4;
    std::array<int, 3> critic_head{8, 16, 8};
    double critic_action_unit_mm = 1000.0;  // the critic sees action / unit

    // Shrinks convolution channels and trunk dense widths; the critic head
    // stays at its full size.
    static NetworkShape scaled(double scale);
    int pooled_length() const { return input_length / 2; }
    int flattened() const { return conv_channels[2] * pooled_length(); }
};

enum class OutputHead { TanhScaled, Linear };

inline constexpr double kActionLimitMm = 1000.0;

class ActorNet {
public:
    ActorNet() = default;
    ActorNet(const NetworkShape& shape, OutputHead head, Rng& rng);
    // Every weight and bias zero; batch-norm stats at mean 0, var 1.
    static ActorNet zeros(const NetworkShape& shape, OutputHead head = OutputHead::TanhScaled);

    // states: (input_length, B), one window per column. Returns B outputs in mm.
    Vector forward(const Matrix& states, const Context& ctx);
    void backward(const Vector& grad_output);

    std::vector<Param*> params() { return net_.params(); }
    std::vector<Buffer*> buffers() { return net_.buffers(); }
    const NetworkShape& shape() const { return shape_; }
    OutputHead head() const { return head_; }

private:
    NetworkShape shape_;
    OutputHead head_ = OutputHead::TanhScaled;
    Sequential net_;
};

class CriticNet {
public:
    CriticNet() = default;
    CriticNet(const NetworkShape& shape, Rng& rng);
    static CriticNet zeros(const NetworkShape& shape);

    // actions in mm; scaled by 1/1000 before joining the latent features.
    Vector forward(const Matrix& states, const Vector& actions_mm, const Context& ctx);
    // Returns dq/d(action_mm). With full == false only the post-join head is
    // traversed (parameter gradients of the trunk are left untouched).
    Vector backward(const Vector& grad_q, bool full = true);

    std::vector<Param*> params();
    std::vector<Buffer*> buffers();
    const NetworkShape& shape() const { return shape_; }

private:
    NetworkShape shape_;
    Sequential trunk_;
    Sequential head_;
};

// Packs windows column-wise for forward().
Matrix stack_states(const std::vector<const PreprocessedCir*>& cirs);

class Adam {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(const std::vector<Param*>& params);
    void reset_state();

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }
    long long steps() const { return t_; }

    // Serialization hooks.
    std::vector<Matrix>& first_moments() { return m_; }
    std::vector<Matrix>& second_moments() { return v_; }
    void set_steps(long long t) { t_ = t; }

private:
    double lr_, beta1_, beta2_, eps_;
    long long t_ = 0;
    std::vector<Matrix> m_, v_;
};

// target <- tau * source + (1 - tau) * target. Throws ShapeMismatch.
void soft_update(Matrix& target, const Matrix& source, double tau);

template <class Net>
    requires requires(Net& n) { n.params(); n.buffers(); }
void soft_update(Net& target, Net& source, double tau) {
    auto tp = target.params();
    auto sp = source.params();
    auto tb = target.buffers();
    auto sb = source.buffers();
    if (tp.size() != sp.size() || tb.size() != sb.size()) {
        throw ShapeMismatch("soft update between networks of different structure");
    }
    for (std::size_t i = 0; i < tp.size(); ++i) soft_update(tp[i]->value, sp[i]->value, tau);
    for (std::size_t i = 0; i < tb.size(); ++i) soft_update(tb[i]->value, sb[i]->value, tau);
}

// Named views of every parameter and buffer, in layer order.
template <class Net>
std::vector<std::pair<std::string, Matrix*>> named_tensors(Net& net) {
    std::vector<std::pair<std::string, Matrix*>> out;
    for (auto* p : net.params()) out.emplace_back(p->name, &p->value);
    for (auto* b : net.buffers()) out.emplace_back(b->name, &b->value);
    return out;
}

}  // namespace uwbrl::nn
