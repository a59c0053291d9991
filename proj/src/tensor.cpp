#include "fdmnet/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace fdmnet {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() = default;

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = fdmnet::numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (fdmnet::numel(shape) != values.size()) {
    throw std::invalid_argument("Tensor::from: shape " + shape_string(shape) + " needs " +
                                std::to_string(fdmnet::numel(shape)) + " values, got " +
                                std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("Tensor: undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw std::out_of_range("Tensor::dim: axis " + std::to_string(axis) + " out of range for " +
                            shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return node_ ? node_->data.size() : 0; }

std::span<const double> Tensor::data() const {
  if (!node_) throw std::logic_error("Tensor: undefined tensor");
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) throw std::logic_error("Tensor: undefined tensor");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("Tensor::item: tensor of shape " + shape_string(shape()) +
                                " is not a scalar");
  }
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!node_->is_leaf) throw std::logic_error("set_requires_grad: only leaves can be flagged");
  node_->requires_grad = flag;
}

bool Tensor::is_leaf() const { return node_ && node_->is_leaf; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("Tensor::grad: no gradient recorded");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!node_) throw std::logic_error("Tensor: undefined tensor");
  if (node_->grad.size() != node_->data.size()) node_->grad.assign(node_->data.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return detach_with(false); }

Tensor Tensor::detach_with(bool requires_grad) const {
  return from(shape(), node_->data, requires_grad);
}

// ---------------------------------------------------------------------------

namespace {

thread_local Tape t_tape;
thread_local bool t_no_grad = false;
thread_local std::vector<detail::Node*> t_touched;

}  // namespace

Tape& Tape::current() { return t_tape; }

void Tape::record(const Tensor& output, BackwardFn fn) {
  entries_.push_back({output.node(), std::move(fn)});
}

void Tape::clear() { entries_.clear(); }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                (loss.defined() ? shape_string(loss.shape()) : "undefined"));
  }
  if (entries_.empty()) throw std::logic_error("backward: tape is empty");
  if (!loss.requires_grad()) throw std::logic_error("backward: loss does not require grad");

  t_touched.clear();
  auto root = loss.node();
  root->work.assign(1, 1.0);
  root->touched = true;
  t_touched.push_back(root.get());

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    auto& out = *it->output;
    if (!out.touched) continue;
    it->fn(out.work);
  }

  for (auto* node : t_touched) {
    if (node->is_leaf && node->requires_grad) {
      if (node->grad.size() != node->data.size()) node->grad.assign(node->data.size(), 0.0);
      for (std::size_t i = 0; i < node->grad.size(); ++i) node->grad[i] += node->work[i];
    }
    node->work.clear();
    node->work.shrink_to_fit();
    node->touched = false;
  }
  t_touched.clear();
}

void backward(const Tensor& loss) { Tape::current().backward(loss); }

NoGradGuard::NoGradGuard() : previous_(t_no_grad) { t_no_grad = true; }
NoGradGuard::~NoGradGuard() { t_no_grad = previous_; }
bool NoGradGuard::enabled() { return t_no_grad; }

namespace detail {

bool needs_grad(std::initializer_list<const Tensor*> inputs) {
  if (t_no_grad) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

std::span<double> grad_sink(const Tensor& input) {
  if (!input.requires_grad()) return {};
  auto* node = input.node().get();
  if (!node->touched) {
    node->work.assign(node->data.size(), 0.0);
    node->touched = true;
    t_touched.push_back(node);
  }
  return node->work;
}

Tensor make_output(Shape shape, std::vector<double> values,
                   std::initializer_list<const Tensor*> inputs, Tape::BackwardFn fn) {
  bool record = needs_grad(inputs);
  Tensor out = Tensor::from(std::move(shape), std::move(values), false);
  if (record) {
    out.node()->requires_grad = true;
    out.node()->is_leaf = false;
    Tape::current().record(out, std::move(fn));
  }
  return out;
}

}  // namespace detail

}  // namespace fdmnet
