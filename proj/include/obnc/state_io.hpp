#pragma once

// Text state files:
//
//   OBNC1
//   d 100
//   K 10
//   n 5
//   tau 1
//   loss ce            (or: loss focal 3 / loss ls 0.1 / loss sc)
//   W
//   <d rows of K numbers>
//   H
//   <d rows of N numbers>
//
// Numbers are written with 17 significant digits, so a write/read round
// trip reproduces every double exactly.

#include <string>

#include "obnc/ufm.hpp"

namespace obnc {

struct StateFile {
  UfmProblem problem;
  UfmState state;
};

std::string format_state(const UfmProblem& problem, const UfmState& state);
void write_state(const std::string& path, const UfmProblem& problem, const UfmState& state);

/// Throws ParseError carrying the byte offset of the first bad token
/// (including truncation and columns that are not unit norm).
StateFile parse_state(const std::string& text);
StateFile read_state(const std::string& path);

}  // namespace obnc
