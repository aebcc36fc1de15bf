#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace metafl {

// Error categories shared by the C++ core and the C API.
enum class Errc : int {
  ok = 0,
  config = 1,
  shape = 2,
  data = 3,
  aggregation = 4,
  capability = 5,
  protocol = 6,
  episode = 7,
  io = 8,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

using Vec = std::vector<double>;

// Small dense-vector helpers. Everything in the engine is a flat vector of
// 64-bit reals; these keep the call sites readable.
double dot(const Vec& a, const Vec& b);
double norm2(const Vec& a);
void axpy(double alpha, const Vec& x, Vec& y);  // y += alpha*x
void scale(Vec& v, double alpha);
Vec scaled(const Vec& v, double alpha);
Vec sum(const std::vector<Vec>& vs);
Vec mean(const std::vector<Vec>& vs);
bool all_finite(const Vec& v);

// Matrix stored row-major, rows x cols.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// Full-precision decimal formatting; round-trips exactly through strtod.
std::string fmt_double(double v);

}  // namespace metafl
