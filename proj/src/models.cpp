// SPDX-License-Identifier: Apache-2.0
#include "camc/models.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "camc/channel.hpp"

namespace camc::models {

namespace {

Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, nc::Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Tensor t(std::move(shape));
  for (auto& v : t.span()) v = static_cast<float>(u(rng));
  return t;
}

Tensor uniform(Shape shape, double limit, nc::Rng& rng) {
  std::uniform_real_distribution<double> u(-limit, limit);
  Tensor t(std::move(shape));
  for (auto& v : t.span()) v = static_cast<float>(u(rng));
  return t;
}

Shape with_batch(std::size_t b, const Shape& s) {
  Shape out{b};
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

void expect_rank(const std::string& layer, const Shape& in, std::size_t rank) {
  if (in.size() != rank)
    throw nc::ShapeError(layer + ": expected a rank-" + std::to_string(rank) + " input, got " + nc::shape_str(in));
}

void expect_last(const std::string& layer, const Shape& in, std::size_t d) {
  if (in.empty() || in.back() != d)
    throw nc::ShapeError(layer + ": expected last dimension " + std::to_string(d) + ", got " + nc::shape_str(in));
}

// ---- layers ---------------------------------------------------------------

class Conv1DLayer final : public Layer {
 public:
  Conv1DLayer(std::string name, std::size_t cin, std::size_t cout, std::size_t k, nc::Activation act)
      : Layer(name), cin_(cin), cout_(cout), k_(k), act_(act),
        kernel_(name + "/kernel", Tensor({k, cin, cout})), bias_(name + "/bias", Tensor({cout})) {}

  std::string kind() const override { return "conv1d"; }
  Shape output_shape(const Shape& in) const override {
    expect_rank(name(), in, 2);
    expect_last(name(), in, cin_);
    return {in[0], cout_};
  }
  Var forward(Tape& tape, const Var& x, ForwardContext&) override {
    return nc::activation(tape, act_, nc::conv1d(tape, x, kernel_.var(), bias_.var()));
  }
  std::uint64_t flops(const Shape& in) const override { return 2ull * in[0] * cout_ * k_ * cin_; }
  std::vector<Param*> params() override { return {&kernel_, &bias_}; }
  void init(nc::Rng& rng) override {
    kernel_.value() = glorot({k_, cin_, cout_}, k_ * cin_, k_ * cout_, rng);
    bias_.value().fill(0.0f);
  }
  std::unique_ptr<Layer> clone() const override {
    auto c = std::make_unique<Conv1DLayer>(*this);
    c->kernel_ = kernel_.clone();
    c->bias_ = bias_.clone();
    return c;
  }

 private:
  std::size_t cin_, cout_, k_;
  nc::Activation act_;
  Param kernel_, bias_;
};

class DenseLayer final : public Layer {
 public:
  DenseLayer(std::string name, std::size_t in, std::size_t out, nc::Activation act)
      : Layer(name), in_(in), out_(out), act_(act),
        kernel_(name + "/kernel", Tensor({in, out})), bias_(name + "/bias", Tensor({out})) {}

  std::string kind() const override { return "dense"; }
  Shape output_shape(const Shape& in) const override {
    expect_last(name(), in, in_);
    Shape out = in;
    out.back() = out_;
    return out;
  }
  Var forward(Tape& tape, const Var& x, ForwardContext&) override {
    return nc::activation(tape, act_, nc::dense(tape, x, kernel_.var(), bias_.var()));
  }
  std::uint64_t flops(const Shape& in) const override { return 2ull * nc::numel(in) * out_; }
  std::vector<Param*> params() override { return {&kernel_, &bias_}; }
  void init(nc::Rng& rng) override {
    kernel_.value() = glorot({in_, out_}, in_, out_, rng);
    bias_.value().fill(0.0f);
  }
  std::unique_ptr<Layer> clone() const override {
    auto c = std::make_unique<DenseLayer>(*this);
    c->kernel_ = kernel_.clone();
    c->bias_ = bias_.clone();
    return c;
  }

 private:
  std::size_t in_, out_;
  nc::Activation act_;
  Param kernel_, bias_;
};

class DropoutLayer final : public Layer {
 public:
  DropoutLayer(std::string name, double rate) : Layer(std::move(name)), rate_(rate) {}
  std::string kind() const override { return "dropout"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Var forward(Tape& tape, const Var& x, ForwardContext& ctx) override {
    if (!ctx.train()) return x;
    if (ctx.rng == nullptr) throw std::logic_error(name() + ": train mode requires an rng");
    return nc::dropout(tape, x, rate_, true, *ctx.rng);
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<DropoutLayer>(*this); }

 private:
  double rate_;
};

class ColumnSumLayer final : public Layer {
 public:
  using Layer::Layer;
  std::string kind() const override { return "column_sum"; }
  Shape output_shape(const Shape& in) const override {
    expect_rank(name(), in, 2);
    return {in[1]};
  }
  Var forward(Tape& tape, const Var& x, ForwardContext&) override { return nc::column_sum(tape, x); }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ColumnSumLayer>(*this); }
};

class BatchNormLayer final : public Layer {
 public:
  BatchNormLayer(std::string name, std::size_t features)
      : Layer(name), features_(features),
        gamma_(name + "/gamma", Tensor({features}, 1.0f)),
        beta_(name + "/beta", Tensor({features})),
        mean_(name + "/moving_mean", Tensor({features}), false),
        var_(name + "/moving_variance", Tensor({features}, 1.0f), false) {}

  std::string kind() const override { return "batchnorm"; }
  Shape output_shape(const Shape& in) const override {
    expect_rank(name(), in, 1);
    expect_last(name(), in, features_);
    return in;
  }
  Var forward(Tape& tape, const Var& x, ForwardContext& ctx) override {
    nc::BatchNormOptions opt;
    opt.train = ctx.train();
    return nc::batchnorm(tape, x, gamma_.var(), beta_.var(), mean_.value(), var_.value(), opt);
  }
  std::vector<Param*> params() override { return {&gamma_, &beta_, &mean_, &var_}; }
  void init(nc::Rng&) override {
    gamma_.value().fill(1.0f);
    beta_.value().fill(0.0f);
    mean_.value().fill(0.0f);
    var_.value().fill(1.0f);
  }
  std::unique_ptr<Layer> clone() const override {
    auto c = std::make_unique<BatchNormLayer>(*this);
    c->gamma_ = gamma_.clone();
    c->beta_ = beta_.clone();
    c->mean_ = mean_.clone();
    c->var_ = var_.clone();
    return c;
  }

 private:
  std::size_t features_;
  Param gamma_, beta_, mean_, var_;
};

class ReshapeLayer final : public Layer {
 public:
  ReshapeLayer(std::string name, Shape target) : Layer(std::move(name)), target_(std::move(target)) {}
  std::string kind() const override { return "reshape"; }
  Shape output_shape(const Shape& in) const override {
    if (nc::numel(in) != nc::numel(target_)) nc::throw_shape(name(), in, target_);
    return target_;
  }
  Var forward(Tape& tape, const Var& x, ForwardContext&) override {
    return nc::reshape(tape, x, with_batch(x.shape().at(0), target_));
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReshapeLayer>(*this); }

 private:
  Shape target_;
};

struct LstmParams {
  Param w, u, b;

  LstmParams(const std::string& prefix, std::size_t in, std::size_t hidden)
      : w(prefix + "/kernel", Tensor({in, 4 * hidden})),
        u(prefix + "/recurrent_kernel", Tensor({hidden, 4 * hidden})),
        b(prefix + "/bias", Tensor({4 * hidden})) {}
  LstmParams(const LstmParams& o) : w(o.w.clone()), u(o.u.clone()), b(o.b.clone()) {}

  nc::LstmWeights<float> weights() const { return {w.var(), u.var(), b.var()}; }
  void init(nc::Rng& rng) {
    const std::size_t in = w.value().dim(0), h4 = w.value().dim(1), h = h4 / 4;
    w.value() = glorot({in, h4}, in, h4, rng);
    u.value() = uniform({h, h4}, 1.0 / std::sqrt(static_cast<double>(h)), rng);
    b.value().fill(0.0f);
    for (std::size_t j = h; j < 2 * h; ++j) b.value()[j] = 1.0f;
  }
  // 4H (D + H) multiply-accumulates per step
  std::uint64_t step_flops() const {
    return 2ull * (w.value().dim(0) + u.value().dim(0)) * w.value().dim(1);
  }
};

class LstmLayer final : public Layer {
 public:
  LstmLayer(std::string name, std::size_t in, std::size_t hidden, nc::LstmReturn ret)
      : Layer(name), in_(in), hidden_(hidden), ret_(ret), p_(name, in, hidden) {}

  std::string kind() const override { return "lstm"; }
  Shape output_shape(const Shape& in) const override {
    expect_rank(name(), in, 2);
    expect_last(name(), in, in_);
    if (ret_ == nc::LstmReturn::Sequence) return {in[0], hidden_};
    return {hidden_};
  }
  Var forward(Tape& tape, const Var& x, ForwardContext&) override {
    return nc::lstm(tape, x, p_.weights(), false, ret_);
  }
  std::uint64_t flops(const Shape& in) const override { return in[0] * p_.step_flops(); }
  std::vector<Param*> params() override { return {&p_.w, &p_.u, &p_.b}; }
  void init(nc::Rng& rng) override { p_.init(rng); }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<LstmLayer>(*this); }

 private:
  std::size_t in_, hidden_;
  nc::LstmReturn ret_;
  LstmParams p_;
};

class BiLstmLayer final : public Layer {
 public:
  BiLstmLayer(std::string name, std::size_t in, std::size_t hidden, nc::LstmReturn ret)
      : Layer(name), in_(in), hidden_(hidden), ret_(ret),
        fwd_(name + "/forward", in, hidden), bwd_(name + "/backward", in, hidden) {}

  std::string kind() const override { return "bilstm"; }
  Shape output_shape(const Shape& in) const override {
    expect_rank(name(), in, 2);
    expect_last(name(), in, in_);
    if (ret_ == nc::LstmReturn::Sequence) return {in[0], 2 * hidden_};
    return {2 * hidden_};
  }
  Var forward(Tape& tape, const Var& x, ForwardContext&) override {
    return nc::bilstm(tape, x, fwd_.weights(), bwd_.weights(), ret_);
  }
  std::uint64_t flops(const Shape& in) const override { return in[0] * (fwd_.step_flops() + bwd_.step_flops()); }
  std::vector<Param*> params() override { return {&fwd_.w, &fwd_.u, &fwd_.b, &bwd_.w, &bwd_.u, &bwd_.b}; }
  void init(nc::Rng& rng) override {
    fwd_.init(rng);
    bwd_.init(rng);
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BiLstmLayer>(*this); }

 private:
  std::size_t in_, hidden_;
  nc::LstmReturn ret_;
  LstmParams fwd_, bwd_;
};

class AttentionLayer final : public Layer {
 public:
  AttentionLayer(std::string name, std::size_t heads, std::size_t d_model, std::size_t d_k, std::size_t d_v)
      : Layer(name), heads_(heads), dm_(d_model), dk_(d_k), dv_(d_v),
        wq_(name + "/query", Tensor({heads, d_model, d_k})),
        wk_(name + "/key", Tensor({heads, d_model, d_k})),
        wv_(name + "/value", Tensor({heads, d_model, d_v})),
        wo_(name + "/output", Tensor({heads * d_v, d_model})) {}

  std::string kind() const override { return "attention"; }
  Shape output_shape(const Shape& in) const override {
    expect_rank(name(), in, 2);
    expect_last(name(), in, dm_);
    return in;
  }
  Var forward(Tape& tape, const Var& x, ForwardContext&) override {
    return nc::multi_head_attention(tape, x, nc::AttentionWeights<float>{wq_.var(), wk_.var(), wv_.var(), wo_.var()});
  }
  std::uint64_t flops(const Shape& in) const override {
    const std::uint64_t s = in[0];
    const std::uint64_t proj = 2ull * s * dm_ * heads_ * (2 * dk_ + dv_);
    const std::uint64_t scores = 2ull * heads_ * s * s * (dk_ + dv_);
    const std::uint64_t out = 2ull * s * heads_ * dv_ * dm_;
    return proj + scores + out;
  }
  std::vector<Param*> params() override { return {&wq_, &wk_, &wv_, &wo_}; }
  void init(nc::Rng& rng) override {
    wq_.value() = glorot({heads_, dm_, dk_}, dm_, dk_, rng);
    wk_.value() = glorot({heads_, dm_, dk_}, dm_, dk_, rng);
    wv_.value() = glorot({heads_, dm_, dv_}, dm_, dv_, rng);
    wo_.value() = glorot({heads_ * dv_, dm_}, heads_ * dv_, dm_, rng);
  }
  std::unique_ptr<Layer> clone() const override {
    auto c = std::make_unique<AttentionLayer>(*this);
    c->wq_ = wq_.clone();
    c->wk_ = wk_.clone();
    c->wv_ = wv_.clone();
    c->wo_ = wo_.clone();
    return c;
  }

 private:
  std::size_t heads_, dm_, dk_, dv_;
  Param wq_, wk_, wv_, wo_;
};

class SoftmaxLayer final : public Layer {
 public:
  using Layer::Layer;
  std::string kind() const override { return "softmax"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Var forward(Tape& tape, const Var& x, ForwardContext&) override { return nc::softmax(tape, x); }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<SoftmaxLayer>(*this); }
};

std::string prefixed(const std::string& model, const std::string& layer) { return model + "/" + layer; }

void add_conv_trunk(Model& m) {
  const std::string id = m.id();
  m.add(std::make_unique<Conv1DLayer>(prefixed(id, "conv1"), 2, 64, 8, nc::Activation::Relu));
  m.add(std::make_unique<DropoutLayer>(prefixed(id, "dropout1"), kDropoutRate));
  m.add(std::make_unique<Conv1DLayer>(prefixed(id, "conv2"), 64, 32, 8, nc::Activation::Relu));
  m.add(std::make_unique<ColumnSumLayer>(prefixed(id, "column_sum")));
  m.add(std::make_unique<BatchNormLayer>(prefixed(id, "bn1"), 32));
}

void check_frame_length(const char* who, std::size_t frame_length) {
  if (frame_length < 8)
    throw std::invalid_argument(std::string(who) + ": frame length must be at least 8, got " +
                                std::to_string(frame_length));
}

void check_classes(const char* who, std::size_t classes) {
  if (classes < 2) throw std::invalid_argument(std::string(who) + ": need at least 2 classes");
}

}  // namespace

// ---- Model -----------------------------------------------------------------

Model::Model(std::string id, Shape input_shape) : id_(std::move(id)), input_shape_(std::move(input_shape)) {}

Model::Model(const Model& other) : id_(other.id_), input_shape_(other.input_shape_), shapes_(other.shapes_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Model& Model::operator=(const Model& other) {
  if (this != &other) {
    Model tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

Shape Model::output_shape() const { return shapes_.empty() ? input_shape_ : shapes_.back(); }

void Model::add(std::unique_ptr<Layer> layer) {
  shapes_.push_back(layer->output_shape(output_shape()));
  layers_.push_back(std::move(layer));
}

Var Model::forward(Tape& tape, const Var& x, ForwardContext& ctx, bool logits) {
  const Shape& s = x.shape();
  if (s.size() != input_shape_.size() + 1 || !std::equal(input_shape_.begin(), input_shape_.end(), s.begin() + 1))
    throw nc::ShapeError(id_ + ": expected input [B, " + nc::shape_str(input_shape_) + "], got " + nc::shape_str(s));
  Var h = x;
  std::size_t n = layers_.size();
  if (logits && n > 0 && layers_.back()->kind() == "softmax") --n;
  for (std::size_t i = 0; i < n; ++i) h = layers_[i]->forward(tape, h, ctx);
  return h;
}

std::vector<Shape> Model::trace_shapes(const Tensor& x) {
  Tape tape(false);
  ForwardContext ctx;
  std::vector<Shape> out;
  Var h = tape.constant(x);
  for (auto& l : layers_) {
    h = l->forward(tape, h, ctx);
    out.push_back(h.shape());
  }
  return out;
}

std::vector<Param*> Model::params() {
  std::vector<Param*> out;
  for (auto& l : layers_)
    for (auto* p : l->params()) out.push_back(p);
  return out;
}

std::vector<const Param*> Model::params() const {
  std::vector<const Param*> out;
  for (const auto& l : layers_)
    for (auto* p : l->params()) out.push_back(p);
  return out;
}

std::vector<Param*> Model::trainable_params() {
  std::vector<Param*> out;
  for (auto* p : params())
    if (p->trainable()) out.push_back(p);
  return out;
}

std::size_t Model::count_params(bool include_non_trainable) const {
  std::size_t n = 0;
  for (const auto* p : params())
    if (include_non_trainable || p->trainable()) n += p->value().size();
  return n;
}

std::uint64_t Model::count_flops() const {
  std::uint64_t f = 0;
  Shape in = input_shape_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    f += layers_[i]->flops(in);
    in = shapes_[i];
  }
  return f;
}

std::vector<LayerSummary> Model::summary() const {
  std::vector<LayerSummary> out;
  Shape in = input_shape_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    LayerSummary s;
    s.name = layers_[i]->name();
    s.kind = layers_[i]->kind();
    s.output_shape = shapes_[i];
    s.flops = layers_[i]->flops(in);
    for (const auto* p : layers_[i]->params()) {
      s.params += p->value().size();
      if (!p->trainable()) s.non_trainable += p->value().size();
    }
    out.push_back(std::move(s));
    in = shapes_[i];
  }
  return out;
}

void Model::init(std::uint64_t seed) {
  nc::Rng rng(seed);
  for (auto& l : layers_) l->init(rng);
}

// ---- builders --------------------------------------------------------------

Model build_sscnet(std::size_t frame_length, std::size_t embedding) {
  check_frame_length("build_sscnet", frame_length);
  if (embedding == 0 || embedding >= 2 * frame_length)
    throw std::invalid_argument("build_sscnet: embedding size must satisfy 0 < N < 2L, got N=" +
                                std::to_string(embedding) + " L=" + std::to_string(frame_length));
  Model m("sscnet", {frame_length, 2});
  add_conv_trunk(m);
  m.add(std::make_unique<DenseLayer>("sscnet/dense", 32, embedding, nc::Activation::Selu));
  m.add(std::make_unique<BatchNormLayer>("sscnet/bn2", embedding));
  m.init(0);
  return m;
}

Model build_mcnet(std::size_t embedding, std::size_t classes) {
  if (embedding == 0) throw std::invalid_argument("build_mcnet: embedding size must be positive");
  check_classes("build_mcnet", classes);
  Model m("mcnet", {embedding});
  m.add(std::make_unique<ReshapeLayer>("mcnet/reshape_in", Shape{embedding, 1}));
  m.add(std::make_unique<BiLstmLayer>("mcnet/bilstm1", 1, 64, nc::LstmReturn::Sequence));
  m.add(std::make_unique<DropoutLayer>("mcnet/dropout1", kDropoutRate));
  m.add(std::make_unique<BiLstmLayer>("mcnet/bilstm2", 128, 64, nc::LstmReturn::Final));
  m.add(std::make_unique<ReshapeLayer>("mcnet/reshape_seq", Shape{1, 128}));
  m.add(std::make_unique<AttentionLayer>("mcnet/attention", 8, 128, 128, 128));
  m.add(std::make_unique<ReshapeLayer>("mcnet/flatten", Shape{128}));
  m.add(std::make_unique<DenseLayer>("mcnet/dense1", 128, 256, nc::Activation::Selu));
  m.add(std::make_unique<BatchNormLayer>("mcnet/bn", 256));
  m.add(std::make_unique<DropoutLayer>("mcnet/dropout2", kDropoutRate));
  m.add(std::make_unique<DenseLayer>("mcnet/dense2", 256, classes, nc::Activation::None));
  m.add(std::make_unique<SoftmaxLayer>("mcnet/softmax"));
  m.init(0);
  return m;
}

Model build_sscnet_dc(std::size_t frame_length, std::size_t classes) {
  check_frame_length("build_sscnet_dc", frame_length);
  check_classes("build_sscnet_dc", classes);
  Model m("sscnet_dc", {frame_length, 2});
  add_conv_trunk(m);
  m.add(std::make_unique<DenseLayer>("sscnet_dc/dense", 32, classes, nc::Activation::None));
  m.add(std::make_unique<SoftmaxLayer>("sscnet_dc/softmax"));
  m.init(0);
  return m;
}

Model build_lstmnet_dc(std::size_t frame_length, std::size_t classes) {
  if (frame_length == 0) throw std::invalid_argument("build_lstmnet_dc: frame length must be positive");
  check_classes("build_lstmnet_dc", classes);
  Model m("lstmnet_dc", {frame_length, 2});
  m.add(std::make_unique<LstmLayer>("lstmnet_dc/lstm1", 2, 40, nc::LstmReturn::Sequence));
  m.add(std::make_unique<LstmLayer>("lstmnet_dc/lstm2", 40, 40, nc::LstmReturn::Final));
  m.add(std::make_unique<DenseLayer>("lstmnet_dc/dense", 40, classes, nc::Activation::None));
  m.add(std::make_unique<SoftmaxLayer>("lstmnet_dc/softmax"));
  m.init(0);
  return m;
}

std::size_t count_params(const Model& m, bool include_non_trainable) { return m.count_params(include_non_trainable); }
std::uint64_t count_flops(const Model& m) { return m.count_flops(); }

std::string summary_text(const Model& m) {
  std::ostringstream os;
  os << "model " << m.id() << "  input " << nc::shape_str(m.input_shape()) << "\n";
  os << std::left << std::setw(28) << "layer" << std::setw(12) << "kind" << std::setw(14) << "output"
     << std::right << std::setw(10) << "params" << std::setw(14) << "flops" << "\n";
  for (const auto& s : m.summary()) {
    os << std::left << std::setw(28) << s.name << std::setw(12) << s.kind << std::setw(14)
       << nc::shape_str(s.output_shape) << std::right << std::setw(10) << s.params << std::setw(14) << s.flops
       << "\n";
  }
  const std::size_t total = m.count_params(true), trainable = m.count_params(false);
  os << "params=" << total << " trainable=" << trainable << " non_trainable=" << total - trainable
     << " flops=" << m.count_flops() << "\n";
  return os.str();
}

std::string summary_csv(const Model& m) {
  std::ostringstream os;
  os << "model,layer,kind,output_shape,params,non_trainable,flops\n";
  for (const auto& s : m.summary()) {
    std::string shape;
    for (std::size_t i = 0; i < s.output_shape.size(); ++i) shape += (i ? "x" : "") + std::to_string(s.output_shape[i]);
    os << m.id() << "," << s.name << "," << s.kind << "," << shape << "," << s.params << "," << s.non_trainable
       << "," << s.flops << "\n";
  }
  return os.str();
}

// ---- pipeline --------------------------------------------------------------

Tensor ap_features(const sigsyn::ComplexFrame& x, bool normalize) {
  auto ap = sigsyn::to_amplitude_phase(x);
  if (normalize) sigsyn::normalize_ap(ap);
  return Tensor({ap.length, 2}, std::move(ap.data));
}

Tensor encode(Model& sscnet, const Tensor& ap_batch) {
  Tape tape(false);
  ForwardContext ctx;
  return sscnet.forward(tape, tape.constant(ap_batch), ctx).value();
}

Tensor classify(Model& mcnet, const Tensor& embeddings) {
  Tape tape(false);
  ForwardContext ctx;
  return mcnet.forward(tape, tape.constant(embeddings), ctx).value();
}

std::vector<float> forward_pipeline(const sigsyn::ComplexFrame& x, Model& sscnet, Model& mcnet,
                                    double transmission_snr_db, nc::Rng& rng, bool normalize_ap) {
  if (sscnet.output_shape() != mcnet.input_shape())
    throw nc::ShapeError("forward_pipeline: encoder output " + nc::shape_str(sscnet.output_shape()) +
                         " does not match classifier input " + nc::shape_str(mcnet.input_shape()));
  Tensor ap = ap_features(x, normalize_ap);
  ap.reshape({1, ap.dim(0), 2});
  Tensor z = encode(sscnet, ap);
  if (!std::isinf(transmission_snr_db)) {
    const auto w = channel::draw_noise(z.span(), transmission_snr_db, rng);
    for (std::size_t i = 0; i < w.size(); ++i) z[i] += w[i];
  }
  return classify(mcnet, z).vec();
}

std::size_t argmax(std::span<const float> v) {
  if (v.empty()) throw std::invalid_argument("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace camc::models
