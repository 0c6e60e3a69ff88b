#include "graphife/autodiff.hpp"

#include "graphife/error.hpp"

namespace graphife::ad {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kVariable: return "variable";
    case OpKind::kConstant: return "constant";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kElementwiseMul: return "elementwise_mul";
    case OpKind::kScalarMul: return "scalar_mul";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kRowGather: return "row_gather";
    case OpKind::kRowMean: return "row_mean";
    case OpKind::kColMean: return "col_mean";
    case OpKind::kAbsMean: return "abs_mean";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kLogSoftmax: return "log_softmax";
    case OpKind::kSpmm: return "spmm";
    case OpKind::kWeightedCrossEntropy: return "weighted_cross_entropy";
    case OpKind::kSlicedWasserstein: return "sliced_wasserstein";
    case OpKind::kClampMin: return "clamp_min";
  }
  return "unknown";
}

Tape& Tensor::tape() const {
  if (tape_ == nullptr) throw TapeError("tensor is not attached to a tape");
  return *tape_;
}

Eigen::Index Tensor::rows() const { return value().rows(); }
Eigen::Index Tensor::cols() const { return value().cols(); }

const Matrix& Tensor::value() const { return tape().records_.at(id_).value; }

bool Tensor::requires_grad() const { return tape().records_.at(id_).requires_grad; }

double Tensor::item() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("item() on a " + shape_string(v.rows(), v.cols()) + " tensor");
  }
  return v(0, 0);
}

bool GradSink::wants(std::size_t slot) const {
  return tape_.records_[inputs_.at(slot)].requires_grad;
}

Matrix& GradSink::at(std::size_t slot) {
  const std::size_t id = inputs_.at(slot);
  if (!tape_.has_grad_[id]) {
    const Matrix& v = tape_.records_[id].value;
    tape_.grads_[id] = Matrix::Zero(v.rows(), v.cols());
    tape_.has_grad_[id] = 1;
  }
  return tape_.grads_[id];
}

void GradSink::accumulate(std::size_t slot, Matrix g) {
  const std::size_t id = inputs_.at(slot);
  if (tape_.has_grad_[id]) {
    tape_.grads_[id] += g;
  } else {
    tape_.grads_[id] = std::move(g);
    tape_.has_grad_[id] = 1;
  }
}

Tensor Tape::variable(Matrix value) {
  return record(OpKind::kVariable, {}, std::move(value), nullptr);
}

Tensor Tape::constant(Matrix value) {
  return record(OpKind::kConstant, {}, std::move(value), nullptr);
}

Tensor Tape::detach(Tensor t) {
  check_owner(t);
  return constant(t.value());
}

Tensor Tape::record(OpKind kind, std::vector<Tensor> inputs, Matrix value, BackwardFn backward) {
  if (consumed_) throw TapeError("tape already consumed by backward(); start a new tape");
  require_finite(value, op_name(kind));
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  bool requires_grad = kind == OpKind::kVariable;
  for (const Tensor& t : inputs) {
    check_owner(t);
    ids.push_back(t.id_);
    requires_grad = requires_grad || records_[t.id_].requires_grad;
  }
  if (kind == OpKind::kConstant) requires_grad = false;
  records_.push_back(Record{kind, std::move(ids), std::move(value), requires_grad,
                            requires_grad ? std::move(backward) : BackwardFn{}});
  return Tensor(this, records_.size() - 1);
}

void Tape::backward(Tensor loss) {
  check_owner(loss);
  if (consumed_) throw TapeError("backward() called twice on the same tape");
  const Matrix& v = records_[loss.id_].value;
  if (v.rows() != 1 || v.cols() != 1) {
    throw TapeError("backward() needs a scalar loss, got " + shape_string(v.rows(), v.cols()));
  }
  consumed_ = true;
  grads_.assign(records_.size(), Matrix());
  has_grad_.assign(records_.size(), 0);
  if (!records_[loss.id_].requires_grad) return;
  grads_[loss.id_] = Matrix::Ones(1, 1);
  has_grad_[loss.id_] = 1;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Record& r = records_[i];
    if (!has_grad_[i] || !r.requires_grad || r.kind == OpKind::kVariable) continue;
    GradSink sink(*this, r.inputs);
    r.backward(grads_[i], sink);
    // Only variable gradients outlive the sweep.
    grads_[i] = Matrix();
    has_grad_[i] = 0;
  }
}

Matrix Tape::grad(Tensor t) const {
  check_owner(t);
  if (!consumed_) throw TapeError("grad() before backward()");
  if (t.id_ < has_grad_.size() && has_grad_[t.id_]) return grads_[t.id_];
  const Matrix& v = records_[t.id_].value;
  return Matrix::Zero(v.rows(), v.cols());
}

OpKind Tape::kind(Tensor t) const {
  check_owner(t);
  return records_[t.id_].kind;
}

const std::vector<std::size_t>& Tape::inputs(Tensor t) const {
  check_owner(t);
  return records_[t.id_].inputs;
}

void Tape::check_owner(Tensor t) const {
  if (t.tape_ != this || t.id_ >= records_.size()) {
    throw TapeError("tensor does not belong to this tape");
  }
}

}  // namespace graphife::ad
