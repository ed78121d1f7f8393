#include "gs/tensor.hpp"

#include <atomic>
#include <sstream>
#include <stdexcept>

namespace gs {

namespace {

std::atomic<int64_t> g_current_bytes{0};
std::atomic<int64_t> g_peak_bytes{0};
bool g_strict = true;

void add_bytes(int64_t n) {
  int64_t cur = g_current_bytes.fetch_add(n) + n;
  int64_t peak = g_peak_bytes.load();
  while (cur > peak && !g_peak_bytes.compare_exchange_weak(peak, cur)) {
  }
}

thread_local Tape* t_active_tape = nullptr;

}  // namespace

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

void fail(const std::string& msg) { throw std::runtime_error(msg); }

MemoryStats memory_stats() { return {g_current_bytes.load(), g_peak_bytes.load()}; }

void reset_peak_memory() { g_peak_bytes.store(g_current_bytes.load()); }

bool strict_mode() { return g_strict; }
void set_strict_mode(bool on) { g_strict = on; }

Node::Node(Shape s, bool rg) : shape(std::move(s)), requires_grad(rg) {
  // Zero-sized dims are legal: an empty Gaussian set is a valid edge state.
  for (int64_t d : shape)
    GS_CHECK(d >= 0, "tensor dims must be non-negative, got " + shape_str(shape));
  int64_t n = shape_numel(shape);
  data.assign(static_cast<size_t>(n), 0.0);
  add_bytes(n * 8);
  if (rg) {
    grad.assign(static_cast<size_t>(n), 0.0);
    add_bytes(n * 8);
  }
}

Node::~Node() {
  add_bytes(-static_cast<int64_t>(data.size() + grad.size()) * 8);
}

void Node::ensure_grad() {
  if (!requires_grad) {
    requires_grad = true;
    grad.assign(data.size(), 0.0);
    add_bytes(static_cast<int64_t>(data.size()) * 8);
  }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t;
  t.n_ = std::make_shared<Node>(std::move(shape), requires_grad);
  return t;
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.data()) v = value;
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
  GS_CHECK(shape_numel(shape) == static_cast<int64_t>(values.size()),
           "from_data: " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
               " values, got " + std::to_string(values.size()));
  Tensor t = zeros(std::move(shape), requires_grad);
  t.n_->data = std::move(values);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

const Shape& Tensor::shape() const {
  GS_CHECK(defined(), "use of undefined tensor");
  return n_->shape;
}

int64_t Tensor::dim(int64_t i) const {
  const Shape& s = shape();
  int64_t nd = static_cast<int64_t>(s.size());
  if (i < 0) i += nd;
  GS_CHECK(i >= 0 && i < nd, "dim index out of range");
  return s[static_cast<size_t>(i)];
}

int64_t Tensor::numel() const {
  GS_CHECK(defined(), "use of undefined tensor");
  return n_->numel();
}

bool Tensor::requires_grad() const { return defined() && n_->requires_grad; }

std::vector<double>& Tensor::data() {
  GS_CHECK(defined(), "use of undefined tensor");
  return n_->data;
}
const std::vector<double>& Tensor::data() const {
  GS_CHECK(defined(), "use of undefined tensor");
  return n_->data;
}
std::vector<double>& Tensor::grad() {
  GS_CHECK(requires_grad(), "tensor has no grad buffer");
  return n_->grad;
}
const std::vector<double>& Tensor::grad() const {
  GS_CHECK(requires_grad(), "tensor has no grad buffer");
  return n_->grad;
}

double Tensor::item() const {
  GS_CHECK(numel() == 1, "item() on tensor of shape " + shape_str(shape()));
  return data()[0];
}

double Tensor::at(int64_t row, int64_t col) const {
  GS_CHECK(ndim() == 2, "at(row,col) needs a rank-2 tensor");
  GS_CHECK(row >= 0 && row < dim(0) && col >= 0 && col < dim(1), "at(): index out of range");
  return data()[static_cast<size_t>(row * dim(1) + col)];
}

void Tensor::zero_grad() {
  if (requires_grad()) std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
}

Tensor Tensor::wrap(std::shared_ptr<Node> n) {
  Tensor t;
  t.n_ = std::move(n);
  return t;
}

void Tape::record(std::function<void()> fn) { entries_.push_back(std::move(fn)); }

void Tape::clear() { entries_.clear(); }

void Tape::backward(const Tensor& loss) {
  GS_CHECK(loss.defined() && loss.numel() == 1, "backward: loss must be a scalar");
  GS_CHECK(loss.requires_grad(), "backward: loss is not recorded on the tape");
  loss.node()->grad[0] += 1.0;
  for (size_t i = entries_.size(); i > 0; --i) entries_[i - 1]();
}

Tape* active_tape() { return t_active_tape; }

TapeScope::TapeScope(Tape& t) : prev_(t_active_tape) { t_active_tape = &t; }
TapeScope::~TapeScope() { t_active_tape = prev_; }

}  // namespace gs
