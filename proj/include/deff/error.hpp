#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace deff {

// Base class for every error raised by the toolkit. Command-line tools map
// it to the "data error" exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed bracketed frame. offset is the byte position in the input text.
class FrameParseError : public Error {
 public:
  FrameParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Corpus ingestion failure; line is 1-based and counts the header.
class CorpusError : public Error {
 public:
  CorpusError(const std::string& source, std::size_t line,
              const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// An exact-match target at or beyond the curve's asymptote.
class UnreachableTarget : public Error {
 public:
  UnreachableTarget(const std::string& what, double asymptote)
      : Error(what), asymptote_(asymptote) {}

  double asymptote() const noexcept { return asymptote_; }

 private:
  double asymptote_;
};

}  // namespace deff
