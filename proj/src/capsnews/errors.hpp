#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace capsnews {

/// Base of every error raised by the library. `kind()` is stable and is what
/// the C API maps onto status codes.
class Error : public std::runtime_error {
 public:
  enum class Kind {
    InvalidArgument,
    Dimension,
    SequenceTooShort,
    Rank,
    UninitializedGradient,
    Parse,
    Label,
    EmptyInput,
    OutOfVocabulary,
    Alignment,
    Config,
    Divergence,
    Incompatible,
    Io,
    NotFound,
  };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

#define CAPSNEWS_DEFINE_ERROR(Name, K)                                     \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& what) : Error(Kind::K, what) {}       \
  };

CAPSNEWS_DEFINE_ERROR(InvalidArgument, InvalidArgument)
CAPSNEWS_DEFINE_ERROR(DimensionError, Dimension)
CAPSNEWS_DEFINE_ERROR(RankError, Rank)
CAPSNEWS_DEFINE_ERROR(UninitializedGradientError, UninitializedGradient)
CAPSNEWS_DEFINE_ERROR(LabelError, Label)
CAPSNEWS_DEFINE_ERROR(EmptyInputError, EmptyInput)
CAPSNEWS_DEFINE_ERROR(OutOfVocabularyError, OutOfVocabulary)
CAPSNEWS_DEFINE_ERROR(AlignmentError, Alignment)
CAPSNEWS_DEFINE_ERROR(ConfigError, Config)
CAPSNEWS_DEFINE_ERROR(IncompatibleError, Incompatible)
CAPSNEWS_DEFINE_ERROR(IoError, Io)
CAPSNEWS_DEFINE_ERROR(NotFoundError, NotFound)

#undef CAPSNEWS_DEFINE_ERROR

class SequenceTooShortError : public Error {
 public:
  SequenceTooShortError(std::size_t length, std::size_t window)
      : Error(Kind::SequenceTooShort, "sequence too short: length " + std::to_string(length) +
                                          " < window " + std::to_string(window)),
        length_(length),
        window_(window) {}
  std::size_t length() const noexcept { return length_; }
  std::size_t window() const noexcept { return window_; }

 private:
  std::size_t length_;
  std::size_t window_;
};

/// Line/row numbers are 1-based.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(Kind::Parse, source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, std::size_t batch_index)
      : Error(Kind::Divergence, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batch_index)),
        batch_index_(batch_index) {}
  std::size_t batch_index() const noexcept { return batch_index_; }

 private:
  std::size_t batch_index_;
};

}  // namespace capsnews
