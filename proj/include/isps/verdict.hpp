// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "isps/system.hpp"

namespace isps {

enum class Status { consistent, falsified, inconclusive };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::consistent:
      return "consistent";
    case Status::falsified:
      return "falsified";
    case Status::inconclusive:
      return "inconclusive";
  }
  return "?";
}

/// A replayable (t, x0, u) triple together with the violation it produced.
struct Witness {
  double t = 0.0;
  StateVector x0;
  InputSignal u;
  double violation = 0.0;
  std::string kind;
};

/*!
  Outcome of a sampled check. `consistent` means no violation was found
  within the budget; only `falsified` verdicts are definitive, and they
  always carry a witness.
*/
struct Verdict {
  Status status = Status::inconclusive;
  std::optional<Witness> witness;
  nlohmann::json evidence = nlohmann::json::object();

  bool consistent() const noexcept { return status == Status::consistent; }
  bool falsified() const noexcept { return status == Status::falsified; }

  static Verdict consistent_with(nlohmann::json evidence = nlohmann::json::object()) {
    return {Status::consistent, std::nullopt, std::move(evidence)};
  }
  static Verdict falsified_by(Witness w, nlohmann::json evidence = nlohmann::json::object()) {
    return {Status::falsified, std::move(w), std::move(evidence)};
  }
  static Verdict inconclusive_with(nlohmann::json evidence = nlohmann::json::object()) {
    return {Status::inconclusive, std::nullopt, std::move(evidence)};
  }
};

inline void to_json(nlohmann::json& j, const Witness& w) {
  j = nlohmann::json{{"kind", w.kind}, {"t", w.t},    {"x0", w.x0},
                     {"u", w.u},       {"violation", w.violation}};
}

inline Witness witness_from_json(const nlohmann::json& j, Norm norm = Norm::euclidean) {
  Witness w;
  w.kind = j.value("kind", "");
  w.t = j.at("t").get<double>();
  w.x0 = StateVector(j.at("x0").get<std::vector<double>>(), norm);
  w.u = input_signal_from_json(j.at("u"));
  w.violation = j.at("violation").get<double>();
  return w;
}

inline void to_json(nlohmann::json& j, const Verdict& v) {
  j = nlohmann::json{{"status", to_string(v.status)}, {"evidence", v.evidence}};
  if (v.witness) j["witness"] = *v.witness;
}

}  // namespace isps
