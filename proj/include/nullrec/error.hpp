#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nullrec {

/// Machine-readable classification of every failure the toolkit reports.
enum class ErrorCode {
  kInvalidArgument,
  kMinorizationViolated,
  kNotStochastic,
  kNotIrreducible,
  kSeriesDiverges,
  kOrderTooLarge,
  kTruncationInsufficient,
  kCoefficientMassDeficit,
  kNegativeVariance,
  kInvalidHalfwidth,
  kUnknownProcessFamily,
  kInvalidSpec,
  kWrongFamily,
  kEmptyNeighborhood,
  kEmptyOccupation,
  kAllNeighborhoodsEmpty,
  kAllRejected,
  kTooFewValues,
  kIncomparableProtocols,
  kConfigParse,
  kIoFailure,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kMinorizationViolated: return "MinorizationViolated";
    case ErrorCode::kNotStochastic: return "NotStochastic";
    case ErrorCode::kNotIrreducible: return "NotIrreducible";
    case ErrorCode::kSeriesDiverges: return "SeriesDiverges";
    case ErrorCode::kOrderTooLarge: return "OrderTooLarge";
    case ErrorCode::kTruncationInsufficient: return "TruncationInsufficient";
    case ErrorCode::kCoefficientMassDeficit: return "CoefficientMassDeficit";
    case ErrorCode::kNegativeVariance: return "NegativeVariance";
    case ErrorCode::kInvalidHalfwidth: return "InvalidHalfwidth";
    case ErrorCode::kUnknownProcessFamily: return "UnknownProcessFamily";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kWrongFamily: return "WrongFamily";
    case ErrorCode::kEmptyNeighborhood: return "EmptyNeighborhood";
    case ErrorCode::kEmptyOccupation: return "EmptyOccupation";
    case ErrorCode::kAllNeighborhoodsEmpty: return "AllNeighborhoodsEmpty";
    case ErrorCode::kAllRejected: return "AllRejected";
    case ErrorCode::kTooFewValues: return "TooFewValues";
    case ErrorCode::kIncomparableProtocols: return "IncomparableProtocols";
    case ErrorCode::kConfigParse: return "ConfigParse";
    case ErrorCode::kIoFailure: return "IoFailure";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class MinorizationViolated : public Error {
 public:
  MinorizationViolated(std::size_t row, std::size_t col, double deficit)
      : Error(ErrorCode::kMinorizationViolated,
              "P[" + std::to_string(row) + "][" + std::to_string(col) +
                  "] < s*nu by " + std::to_string(deficit)),
        row(row),
        col(col),
        deficit(deficit) {}

  std::size_t row;
  std::size_t col;
  double deficit;
};

class NotStochastic : public Error {
 public:
  explicit NotStochastic(std::size_t row, const std::string& detail = "")
      : Error(ErrorCode::kNotStochastic,
              "row " + std::to_string(row) + (detail.empty() ? "" : ": " + detail)),
        row(row) {}

  std::size_t row;
};

class NotIrreducible : public Error {
 public:
  explicit NotIrreducible(std::vector<std::vector<std::size_t>> components)
      : Error(ErrorCode::kNotIrreducible,
              std::to_string(components.size()) + " strongly connected components"),
        components(std::move(components)) {}

  std::vector<std::vector<std::size_t>> components;
};

/// Raised by every truncated series whose analytic tail bound exceeds the
/// requested tolerance.
class TruncationInsufficient : public Error {
 public:
  TruncationInsufficient(double tail_bound, double tol)
      : Error(ErrorCode::kTruncationInsufficient,
              "tail bound " + std::to_string(tail_bound) + " exceeds tolerance " +
                  std::to_string(tol)),
        tail_bound(tail_bound) {}

  double tail_bound;
};

}  // namespace nullrec
