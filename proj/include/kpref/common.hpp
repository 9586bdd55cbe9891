#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace kpref {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Raised for malformed input data: bad files, inconsistent graph inputs,
/// invalid configuration. The CLI maps this to exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// printf-style formatting into a std::string (always "C" numeric locale).
std::string strformat(const char* fmt, ...);

/// Formats a double with 17 significant digits so that parsing the text
/// recovers the exact same value.
std::string format_double(double v);

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Work is split into
/// contiguous index ranges, so writes to per-index slots are deterministic
/// regardless of scheduling.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

/// Log verbosity, controlled by the KPREFINE_LOG environment variable
/// (0/quiet, 1/info, 2/debug; default 0).
int log_level();
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace kpref
