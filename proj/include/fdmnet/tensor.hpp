#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fdmnet {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  // Persistent gradient of a leaf; for op outputs it holds the last pass.
  std::vector<double> grad;
  // Per-pass adjoint buffer, only alive during Tape::backward.
  std::vector<double> work;
  bool requires_grad = false;
  bool is_leaf = true;
  bool touched = false;
};

using NodePtr = std::shared_ptr<Node>;

}  // namespace detail

/// Dense row-major tensor of doubles. Copies share storage; the handle is
/// cheap to pass by value. Values recorded on a tape must not be mutated
/// until the tape is cleared.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Direct write access, meant for leaves (parameters, inputs).
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t flat) const { return data()[flat]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// New leaf holding a copy of the values, cut from any tape.
  Tensor detach() const;
  Tensor clone(bool requires_grad = false) const { return detach_with(requires_grad); }

  // Identity of the underlying storage (used for optimizer state lookup).
  const void* id() const { return node_.get(); }

  detail::NodePtr node() const { return node_; }
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

 private:
  Tensor detach_with(bool requires_grad) const;
  detail::NodePtr node_;
};

/// Ordered record of differentiable operations for one thread.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> grad_out)>;

  static Tape& current();

  void record(const Tensor& output, BackwardFn fn);
  void clear();
  std::size_t size() const { return entries_.size(); }

  /// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
  /// calls until zeroed; each pass is summed separately before being added.
  void backward(const Tensor& loss);

 private:
  struct Entry {
    detail::NodePtr output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
};

/// Disables recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool enabled();

 private:
  bool previous_;
};

void backward(const Tensor& loss);

namespace detail {

// True when an op output over these inputs should be recorded.
bool needs_grad(std::initializer_list<const Tensor*> inputs);

// Adjoint buffer of an input during backward, or an empty span when the input
// does not take gradients.
std::span<double> grad_sink(const Tensor& input);

// Builds an op output and records the backward rule when required.
Tensor make_output(Shape shape, std::vector<double> values,
                   std::initializer_list<const Tensor*> inputs,
                   Tape::BackwardFn fn);

}  // namespace detail

}  // namespace fdmnet
