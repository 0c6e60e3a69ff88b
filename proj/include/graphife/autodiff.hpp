#pragma once

#include "graphife/matrix.hpp"

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace graphife::ad {

enum class OpKind {
  kVariable,
  kConstant,
  kMatMul,
  kAdd,
  kElementwiseMul,
  kScalarMul,
  kRelu,
  kSigmoid,
  kConcatCols,
  kRowGather,
  kRowMean,
  kColMean,
  kAbsMean,
  kSum,
  kMean,
  kLogSoftmax,
  kSpmm,
  kWeightedCrossEntropy,
  kSlicedWasserstein,
  kClampMin,
};

const char* op_name(OpKind kind);

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while its tape lives.
class Tensor {
 public:
  Tensor() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const;
  std::size_t id() const { return id_; }

  Eigen::Index rows() const;
  Eigen::Index cols() const;
  const Matrix& value() const;
  bool requires_grad() const;
  /// Value of a 1x1 tensor.
  double item() const;

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradient accumulator handed to a primitive's vector-Jacobian product.
class GradSink {
 public:
  /// True if input `slot` takes part in differentiation.
  bool wants(std::size_t slot) const;
  /// Gradient buffer for input `slot`, zero-initialized on first access.
  Matrix& at(std::size_t slot);
  /// Adds `g` into the buffer for input `slot`, taking ownership on first access.
  void accumulate(std::size_t slot, Matrix g);

 private:
  friend class Tape;
  GradSink(Tape& tape, const std::vector<std::size_t>& inputs) : tape_(tape), inputs_(inputs) {}

  Tape& tape_;
  const std::vector<std::size_t>& inputs_;
};

using BackwardFn = std::function<void(const Matrix& grad_out, GradSink& sink)>;

/// Linear record of primitive applications, replayed in reverse by backward().
///
/// Records are appended in evaluation order, so every record's inputs precede it. A tape is
/// single-use: after backward() it is consumed and accepts no new records.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Tensor variable(Matrix value);
  /// Leaf excluded from differentiation.
  Tensor constant(Matrix value);
  /// Constant copy of `t`'s current value.
  Tensor detach(Tensor t);

  /// Appends a primitive result. Used by the primitive implementations.
  Tensor record(OpKind kind, std::vector<Tensor> inputs, Matrix value, BackwardFn backward);

  /// Reverse sweep from a 1x1 loss. Populates grad() for every variable on the tape.
  void backward(Tensor loss);

  /// Gradient of the backward() loss w.r.t. variable `t`; zeros if `t` did not influence it
  /// (and for non-variable records, whose gradients are released after the sweep).
  Matrix grad(Tensor t) const;

  bool consumed() const { return consumed_; }
  std::size_t size() const { return records_.size(); }
  OpKind kind(Tensor t) const;
  /// Input ids of record `t` (for inspecting topological order).
  const std::vector<std::size_t>& inputs(Tensor t) const;

 private:
  friend class Tensor;
  friend class GradSink;

  struct Record {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Matrix value;
    bool requires_grad;
    BackwardFn backward;
  };

  void check_owner(Tensor t) const;

  std::vector<Record> records_;
  std::vector<Matrix> grads_;
  std::vector<char> has_grad_;
  bool consumed_ = false;
};

}  // namespace graphife::ad
