#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "nullrec/error.hpp"

namespace nullrec {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline constexpr double kStochasticTol = 1e-12;

namespace detail {

// Kosaraju on the support graph of P (edge i -> j iff P[i][j] > 0).
inline std::vector<std::vector<std::size_t>> strongly_connected_components(const Matrix& p) {
  const auto d = static_cast<std::size_t>(p.rows());
  std::vector<bool> seen(d, false);
  std::vector<std::size_t> order;
  order.reserve(d);

  std::function<void(std::size_t)> forward = [&](std::size_t i) {
    seen[i] = true;
    for (std::size_t j = 0; j < d; ++j) {
      if (p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0.0 && !seen[j]) {
        forward(j);
      }
    }
    order.push_back(i);
  };
  for (std::size_t i = 0; i < d; ++i) {
    if (!seen[i]) forward(i);
  }

  std::vector<std::vector<std::size_t>> components;
  std::vector<bool> assigned(d, false);
  std::function<void(std::size_t, std::vector<std::size_t>&)> backward =
      [&](std::size_t i, std::vector<std::size_t>& comp) {
        assigned[i] = true;
        comp.push_back(i);
        for (std::size_t j = 0; j < d; ++j) {
          if (p(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) > 0.0 &&
              !assigned[j]) {
            backward(j, comp);
          }
        }
      };
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!assigned[*it]) {
      std::vector<std::size_t> comp;
      backward(*it, comp);
      std::sort(comp.begin(), comp.end());
      components.push_back(std::move(comp));
    }
  }
  return components;
}

inline double json_real(const nlohmann::json& value) {
  if (value.is_number()) return value.get<double>();
  if (value.is_string()) {
    const auto text = value.get<std::string>();
    std::size_t used = 0;
    double parsed = 0.0;
    try {
      parsed = std::stod(text, &used);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kConfigParse, "not a real number: '" + text + "'");
    }
    if (used != text.size()) {
      throw Error(ErrorCode::kConfigParse, "trailing characters in real: '" + text + "'");
    }
    return parsed;
  }
  throw Error(ErrorCode::kConfigParse, "expected a real (number or decimal string)");
}

}  // namespace detail

/// A finite-state transition matrix together with an atom (s, nu) satisfying
/// P >= s (x) nu. Instances are validated on construction and immutable
/// afterwards, so every holder may assume the invariants.
class FiniteMarkovModel {
 public:
  FiniteMarkovModel(std::vector<std::string> states, Matrix p, Vector s, Vector nu)
      : states_(std::move(states)), p_(std::move(p)), s_(std::move(s)), nu_(std::move(nu)) {
    if (states_.empty()) {
      for (Eigen::Index i = 0; i < p_.rows(); ++i) states_.push_back(std::to_string(i));
    }
    validate();
  }

  FiniteMarkovModel(Matrix p, Vector s, Vector nu)
      : FiniteMarkovModel({}, std::move(p), std::move(s), std::move(nu)) {}

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(p_.rows()); }
  [[nodiscard]] const std::vector<std::string>& states() const { return states_; }
  [[nodiscard]] const Matrix& transition() const { return p_; }
  [[nodiscard]] const Vector& small_function() const { return s_; }
  [[nodiscard]] const Vector& small_measure() const { return nu_; }

  /// Residual kernel Q of the mixture P = (1 - s) Q + s nu, row i. Rows with
  /// s(i) = 1 put unit mass on i itself.
  [[nodiscard]] RowVector residual_row(std::size_t i) const {
    const auto ii = static_cast<Eigen::Index>(i);
    RowVector q = RowVector::Zero(p_.cols());
    if (s_(ii) < 1.0) {
      q = (p_.row(ii) - s_(ii) * nu_.transpose()) / (1.0 - s_(ii));
    } else {
      q(ii) = 1.0;
    }
    return q;
  }

 private:
  void validate() const {
    const Eigen::Index d = p_.rows();
    if (d == 0 || p_.cols() != d || s_.size() != d || nu_.size() != d ||
        static_cast<Eigen::Index>(states_.size()) != d) {
      throw Error(ErrorCode::kInvalidArgument, "inconsistent model dimensions");
    }
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        if (!std::isfinite(p_(i, j)) || p_(i, j) < 0.0) {
          throw NotStochastic(static_cast<std::size_t>(i), "negative or non-finite entry");
        }
      }
      if (std::abs(p_.row(i).sum() - 1.0) > kStochasticTol) {
        throw NotStochastic(static_cast<std::size_t>(i), "row sum " + std::to_string(p_.row(i).sum()));
      }
    }
    if ((nu_.array() < 0.0).any() || !nu_.allFinite() ||
        std::abs(nu_.sum() - 1.0) > kStochasticTol) {
      throw Error(ErrorCode::kInvalidArgument, "nu must be a probability vector");
    }
    if ((s_.array() < 0.0).any() || (s_.array() > 1.0).any() || !s_.allFinite()) {
      throw Error(ErrorCode::kInvalidArgument, "s must take values in [0, 1]");
    }
    auto components = detail::strongly_connected_components(p_);
    if (components.size() != 1) throw NotIrreducible(std::move(components));
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        const double deficit = s_(i) * nu_(j) - p_(i, j);
        if (deficit > kStochasticTol) {
          throw MinorizationViolated(static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                                     deficit);
        }
      }
    }
  }

  std::vector<std::string> states_;
  Matrix p_;
  Vector s_;
  Vector nu_;
};

/// Succeeds iff every model invariant holds. Construction already enforces
/// this; the free function re-checks raw inputs without keeping a model.
inline void validate_atom(const Matrix& p, const Vector& s, const Vector& nu) {
  [[maybe_unused]] FiniteMarkovModel model(p, s, nu);
}

inline FiniteMarkovModel model_from_json(const nlohmann::json& doc) {
  try {
    const auto& rows = doc.at("P");
    const auto d = static_cast<Eigen::Index>(rows.size());
    Matrix p(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      const auto& row = rows.at(static_cast<std::size_t>(i));
      if (static_cast<Eigen::Index>(row.size()) != d) {
        throw Error(ErrorCode::kConfigParse, "P must be square");
      }
      for (Eigen::Index j = 0; j < d; ++j) {
        p(i, j) = detail::json_real(row.at(static_cast<std::size_t>(j)));
      }
    }
    auto read_vector = [&](const char* key) {
      const auto& arr = doc.at(key);
      if (static_cast<Eigen::Index>(arr.size()) != d) {
        throw Error(ErrorCode::kConfigParse, std::string(key) + " has wrong length");
      }
      Vector v(d);
      for (Eigen::Index i = 0; i < d; ++i) v(i) = detail::json_real(arr.at(static_cast<std::size_t>(i)));
      return v;
    };
    std::vector<std::string> labels;
    if (doc.contains("states")) {
      for (const auto& label : doc.at("states")) {
        labels.push_back(label.is_string() ? label.get<std::string>() : label.dump());
      }
    }
    return FiniteMarkovModel(std::move(labels), std::move(p), read_vector("s"), read_vector("nu"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigParse, e.what());
  }
}

inline nlohmann::json model_to_json(const FiniteMarkovModel& model) {
  nlohmann::json doc;
  doc["states"] = model.states();
  const auto d = static_cast<Eigen::Index>(model.size());
  auto& rows = doc["P"] = nlohmann::json::array();
  for (Eigen::Index i = 0; i < d; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < d; ++j) row.push_back(model.transition()(i, j));
    rows.push_back(row);
  }
  doc["s"] = std::vector<double>(model.small_function().begin(), model.small_function().end());
  doc["nu"] = std::vector<double>(model.small_measure().begin(), model.small_measure().end());
  return doc;
}

inline FiniteMarkovModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfigParse, "cannot open chain file " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigParse, path + ": " + e.what());
  }
  return model_from_json(doc);
}

}  // namespace nullrec
