#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lodfm {

// Input violates a structural contract (duplicate ids, unordered indices, bad config).
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Vector/parameter dimensions do not agree.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A referenced user/item/feature is unknown.
class LookupError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed text: ratings lines, SPARQL result bodies, cache files, checkpoints.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File system failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An operation received input it cannot produce a meaningful result for
// (empty pair sets, all-absent PageRank scores, ...).
class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Network/HTTP failure that survived the retry budget.
class TransportError : public std::runtime_error {
 public:
  TransportError(const std::string& what, std::size_t attempts)
      : std::runtime_error(what), attempts_(attempts) {}
  std::size_t attempts() const { return attempts_; }

 private:
  std::size_t attempts_;
};

}  // namespace lodfm
