#pragma once

#include <stdexcept>
#include <string>

namespace ftn {

// Error taxonomy, mapped to CLI exit codes in tools/ftn_main.cpp:
//   usage_error / config_error -> 1, data_error -> 2, numeric_error -> 3.

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API or CLI misuse (stale cache, missing mask, bad subcommand usage).
struct usage_error : error {
  using error::error;
};

// Invalid configuration: bad shapes, out-of-range knobs, unknown keys.
struct config_error : error {
  using error::error;
};

// Fixed-mask grid exhaustion: more disjoint blocks requested than exist.
struct capacity_error : config_error {
  using config_error::config_error;
};

// Data ingestion and integrity: bad magic, truncation, digest mismatch.
struct data_error : error {
  using error::error;
};

// Non-finite values where finite ones are required.
struct numeric_error : error {
  using error::error;
};

}  // namespace ftn
