#pragma once

#include <cmath>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include "dfn/engine.hpp"

namespace dfn::control {

using json = nlohmann::json;

inline constexpr int kProtocolVersion = 1;
inline constexpr double kDefaultMeterHz = 10.0;
inline constexpr double kMaxMeterHz = 100.0;  // one meter per hop

struct SetAtten {
  double db;
};
struct SetThresholds {
  double silence_below_db;
  double df_off_above_db;
};
struct SetStages {
  bool erb;
  bool df;
};
struct SetEstimator {
  EstimatorKind kind;
};
struct GetConfig {};
struct Subscribe {
  double meter_hz;
};

using ControlMessage = std::variant<SetAtten, SetThresholds, SetStages, SetEstimator, GetConfig, Subscribe>;

struct ProtocolError {
  std::string code;
  std::string message;
};

using ParseResult = std::variant<ControlMessage, ProtocolError>;

namespace detail {

inline bool get_number(const json& j, const char* key, double& out) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number()) return false;
  out = it->get<double>();
  return std::isfinite(out);
}

inline bool get_bool(const json& j, const char* key, bool& out) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_boolean()) return false;
  out = it->get<bool>();
  return true;
}

inline ProtocolError bad_field(const std::string& type, const std::string& fields) {
  return {"invalid_message", type + " requires " + fields};
}

}  // namespace detail

// One newline-delimited JSON object with a "type" discriminator.
inline ParseResult parse_message(const std::string& text) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) return ProtocolError{"invalid_json", "message is not a JSON object"};
  if (auto v = j.find("version"); v != j.end() && (!v->is_number_integer() || v->get<int>() != kProtocolVersion))
    return ProtocolError{"unsupported_version", "protocol version " + std::to_string(kProtocolVersion) + " expected"};
  auto t = j.find("type");
  if (t == j.end() || !t->is_string()) return ProtocolError{"invalid_message", "missing string field 'type'"};
  const std::string type = t->get<std::string>();

  if (type == "set_atten") {
    double db;
    if (!detail::get_number(j, "db", db)) return detail::bad_field(type, "numeric 'db'");
    return ControlMessage{SetAtten{db}};
  }
  if (type == "set_thresholds") {
    double lo, hi;
    if (!detail::get_number(j, "silence_below_db", lo) || !detail::get_number(j, "df_off_above_db", hi))
      return detail::bad_field(type, "numeric 'silence_below_db' and 'df_off_above_db'");
    return ControlMessage{SetThresholds{lo, hi}};
  }
  if (type == "set_stages") {
    bool erb, df;
    if (!detail::get_bool(j, "erb", erb) || !detail::get_bool(j, "df", df))
      return detail::bad_field(type, "boolean 'erb' and 'df'");
    return ControlMessage{SetStages{erb, df}};
  }
  if (type == "set_estimator") {
    auto k = j.find("kind");
    EstimatorKind kind;
    if (k == j.end() || !k->is_string() || !parse_estimator_kind(k->get<std::string>(), kind))
      return detail::bad_field(type, "'kind' in {passthrough, blind, oracle}");
    return ControlMessage{SetEstimator{kind}};
  }
  if (type == "get_config") return ControlMessage{GetConfig{}};
  if (type == "subscribe") {
    double hz = kDefaultMeterHz;
    if (j.contains("meter_hz") && !detail::get_number(j, "meter_hz", hz))
      return detail::bad_field(type, "numeric 'meter_hz'");
    return ControlMessage{Subscribe{hz}};
  }
  return ProtocolError{"unknown_type", "unknown message type '" + type + "'"};
}

inline json config_to_json(const EngineConfig& c) {
  return json{{"atten_db", c.atten.max_atten_db},
              {"silence_below_db", c.thresholds.silence_below_db},
              {"df_off_above_db", c.thresholds.df_off_above_db},
              {"erb_enabled", c.erb_enabled},
              {"df_enabled", c.df_enabled},
              {"estimator", std::string(to_string(c.estimator))},
              {"lookahead_frames", c.stft.lookahead_frames},
              {"latency_samples", latency_samples(c.stft)}};
}

inline json config_ack(const EngineConfig& c, double meter_hz) {
  return json{{"type", "config_ack"}, {"version", kProtocolVersion}, {"config", config_to_json(c)}, {"meter_hz", meter_hz}};
}

inline json error_event(const ProtocolError& e) {
  return json{{"type", "error"}, {"version", kProtocolVersion}, {"code", e.code}, {"message", e.message}};
}

inline json meter_event(const MeterFrame& m) {
  return json{{"type", "meter"},
              {"frame_index", m.frame_index},
              {"xi_db", m.xi_db},
              {"decision", std::string(to_string(m.decision))},
              {"mean_gain", m.mean_gain},
              {"df_delta_db", m.df_delta_db},
              {"in_rms_db", m.in_rms_db},
              {"out_rms_db", m.out_rms_db}};
}

// Per-connection protocol state.
struct ClientState {
  double meter_hz = 0.0;  // 0 = not subscribed
};

// Applies control messages to an engine. Every message yields exactly one
// config_ack or error event; rejected messages leave the engine untouched.
class Controller {
 public:
  explicit Controller(Engine& engine) : engine_(engine) {}

  json handle(const std::string& text, ClientState& client) {
    ParseResult parsed = parse_message(text);
    if (auto* err = std::get_if<ProtocolError>(&parsed)) return error_event(*err);
    return apply(std::get<ControlMessage>(parsed), client);
  }

  json apply(const ControlMessage& msg, ClientState& client) {
    EngineConfig cfg = engine_.snapshot_config();
    bool changes_engine = true;
    std::visit(
        [&](const auto& m) {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, SetAtten>) {
            cfg.atten.max_atten_db = static_cast<float>(m.db);
          } else if constexpr (std::is_same_v<M, SetThresholds>) {
            cfg.thresholds.silence_below_db = static_cast<float>(m.silence_below_db);
            cfg.thresholds.df_off_above_db = static_cast<float>(m.df_off_above_db);
          } else if constexpr (std::is_same_v<M, SetStages>) {
            cfg.erb_enabled = m.erb;
            cfg.df_enabled = m.df;
          } else if constexpr (std::is_same_v<M, SetEstimator>) {
            cfg.estimator = m.kind;
          } else {
            changes_engine = false;
          }
        },
        msg);

    if (const auto* sub = std::get_if<Subscribe>(&msg)) {
      if (!(sub->meter_hz >= 0.0 && sub->meter_hz <= kMaxMeterHz))
        return error_event({"invalid_value", "meter_hz must be in [0, 100]"});
      client.meter_hz = sub->meter_hz;
    }
    if (changes_engine) {
      try {
        engine_.update_config(cfg);
      } catch (const std::invalid_argument& e) {
        return error_event({"invalid_value", e.what()});
      }
    }
    return config_ack(engine_.snapshot_config(), client.meter_hz);
  }

 private:
  Engine& engine_;
};

}  // namespace dfn::control
