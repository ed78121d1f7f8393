#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace gs {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

[[noreturn]] void fail(const std::string& msg);

#define GS_CHECK(cond, msg) \
  do {                      \
    if (!(cond)) ::gs::fail(msg); \
  } while (0)

// Running total of tensor payload bytes (data + grad buffers) and the high
// water mark since the last reset. Cheap enough to keep always on.
struct MemoryStats {
  int64_t current_bytes = 0;
  int64_t peak_bytes = 0;
};
MemoryStats memory_stats();
void reset_peak_memory();

// Strict mode turns domain violations (log of non-positive, division by zero)
// into errors instead of letting non-finite values propagate. On by default.
bool strict_mode();
void set_strict_mode(bool on);

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // non-empty iff requires_grad
  bool requires_grad = false;

  Node(Shape s, bool rg);
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  void ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const;
  int64_t ndim() const { return static_cast<int64_t>(shape().size()); }
  int64_t dim(int64_t i) const;  // negative i counts from the back
  int64_t numel() const;
  bool requires_grad() const;

  std::vector<double>& data();
  const std::vector<double>& data() const;
  std::vector<double>& grad();
  const std::vector<double>& grad() const;

  double item() const;                 // scalar tensors only
  double at(int64_t row, int64_t col) const;  // rank-2 convenience

  void zero_grad();

  std::shared_ptr<Node> node() const { return n_; }
  static Tensor wrap(std::shared_ptr<Node> n);

 private:
  std::shared_ptr<Node> n_;
};

// Reverse-mode tape. Ops append one closure per recorded operation; backward
// replays them in reverse. Graphs are rebuilt each step, so the tape never
// needs retain/release semantics.
class Tape {
 public:
  void record(std::function<void()> fn);
  size_t size() const { return entries_.size(); }
  void clear();

  // Seeds d(loss)/d(loss) = 1 and runs every recorded closure exactly once in
  // reverse order. The loss must be a scalar recorded on this tape.
  void backward(const Tensor& loss);

 private:
  std::vector<std::function<void()>> entries_;
};

// At most one tape is active per thread; ops record onto it when any input
// requires grad. No active tape means pure inference: outputs carry no grad
// buffers and intermediates free as soon as the last handle drops.
Tape* active_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape& t);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

}  // namespace gs
