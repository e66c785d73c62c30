#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace lmke {

// Base of every engine error. The category string is stable and is what the
// CLI prints in its machine-readable error line.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}

  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

#define LMKE_ERROR_CLASS(NAME, CATEGORY)                 \
  class NAME : public Error {                            \
   public:                                               \
    explicit NAME(const std::string& what)               \
        : Error(CATEGORY, what) {}                       \
  }

LMKE_ERROR_CLASS(FormatError, "format");
LMKE_ERROR_CLASS(TruncationError, "truncation");
LMKE_ERROR_CLASS(IntegrityError, "integrity");
LMKE_ERROR_CLASS(IoError, "io");
LMKE_ERROR_CLASS(EmptySetError, "empty_set");
LMKE_ERROR_CLASS(ZeroVectorError, "zero_vector");
LMKE_ERROR_CLASS(NormError, "norm");
LMKE_ERROR_CLASS(ParamError, "param");
LMKE_ERROR_CLASS(IndexError, "index");
LMKE_ERROR_CLASS(DegenerateLabelError, "degenerate_label");
LMKE_ERROR_CLASS(GenerationError, "generation");
LMKE_ERROR_CLASS(UndefinedMetricError, "undefined_metric");

#undef LMKE_ERROR_CLASS

}  // namespace lmke
