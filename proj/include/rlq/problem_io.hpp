#pragma once

// JSON problem files.
//
//   {
//     "n": 1, "m": 1,
//     "A": [0], "B": [1], "C": [0], "D": [0],
//     "E": 2, "F": 0,
//     "Q": [1], "S": [0], "R": [1],
//     "q": {"kind": "zero"},
//     "r": {"kind": "constant", "params": {"value": [0.5]}},
//     "b": {"kind": "piecewise_constant", "params": {"breakpoints": [0, 1], "values": [[1], [0]]}},
//     "sigma": {"kind": "exp_decay", "params": {"amplitude": [1], "rate": 0.5}},
//     "t0": 0, "x0": [1]
//   }
//
// Matrices are row-major flat arrays. n, m, A, B, E, Q, R, x0 are required;
// C, D, S default to zero, F and t0 to 0, signals to zero.

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"
#include "rlq/error.hpp"
#include "rlq/linalg.hpp"
#include "rlq/model.hpp"
#include "rlq/signal.hpp"

namespace rlq {

using Json = nlohmann::ordered_json;

namespace detail {

[[noreturn]] inline void parse_fail(const std::string& detail) {
    throw Error(ErrorCode::ParseError, "cli", "read_problem", detail);
}

inline void reject_unknown(const Json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) parse_fail(where + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (!allowed.count(key)) parse_fail("unknown field '" + key + "' in " + where);
    }
}

inline double number(const Json& j, const std::string& field) {
    if (!j.is_number()) parse_fail("field '" + field + "' must be a number");
    return j.get<double>();
}

inline std::vector<double> numbers(const Json& j, const std::string& field) {
    if (!j.is_array()) parse_fail("field '" + field + "' must be an array of numbers");
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& v : j) out.push_back(number(v, field));
    return out;
}

inline Matrix matrix_field(const Json& doc, const std::string& field, Eigen::Index rows, Eigen::Index cols, bool required) {
    if (!doc.contains(field)) {
        if (required) parse_fail("missing field '" + field + "'");
        return Matrix::Zero(rows, cols);
    }
    const auto data = numbers(doc.at(field), field);
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw Error(ErrorCode::DimensionMismatch, "cli", "read_problem",
                    field + " has " + std::to_string(data.size()) + " entries, expected " + std::to_string(rows * cols));
    }
    return from_row_major(data, rows, cols);
}

inline Vector vector_of(const Json& j, const std::string& field, Eigen::Index dim) {
    const auto data = numbers(j, field);
    if (static_cast<Eigen::Index>(data.size()) != dim) {
        throw Error(ErrorCode::DimensionMismatch, "cli", "read_problem",
                    field + " has " + std::to_string(data.size()) + " entries, expected " + std::to_string(dim));
    }
    return Eigen::Map<const Vector>(data.data(), dim);
}

inline DeterministicSignal signal_field(const Json& doc, const std::string& field, Eigen::Index dim) {
    if (!doc.contains(field)) return DeterministicSignal::zero(dim);
    const Json& s = doc.at(field);
    reject_unknown(s, {"kind", "params"}, field);
    if (!s.contains("kind") || !s.at("kind").is_string()) parse_fail(field + ".kind must be a string");
    const SignalKind kind = signal_kind_from_string(s.at("kind").get<std::string>());
    const Json params = s.contains("params") ? s.at("params") : Json::object();
    switch (kind) {
        case SignalKind::Zero:
            reject_unknown(params, {}, field + ".params");
            return DeterministicSignal::zero(dim);
        case SignalKind::Constant:
            reject_unknown(params, {"value"}, field + ".params");
            if (!params.contains("value")) parse_fail(field + ".params.value missing");
            return DeterministicSignal::constant(vector_of(params.at("value"), field + ".value", dim));
        case SignalKind::ExpDecay:
            reject_unknown(params, {"amplitude", "rate"}, field + ".params");
            if (!params.contains("amplitude") || !params.contains("rate")) parse_fail(field + ".params needs amplitude and rate");
            return DeterministicSignal::exp_decay(vector_of(params.at("amplitude"), field + ".amplitude", dim),
                                                  number(params.at("rate"), field + ".rate"));
        case SignalKind::PiecewiseConstant: {
            reject_unknown(params, {"breakpoints", "values"}, field + ".params");
            if (!params.contains("breakpoints") || !params.contains("values"))
                parse_fail(field + ".params needs breakpoints and values");
            std::vector<Vector> values;
            if (!params.at("values").is_array()) parse_fail(field + ".values must be an array");
            for (const auto& v : params.at("values")) values.push_back(vector_of(v, field + ".values", dim));
            return DeterministicSignal::piecewise_constant(numbers(params.at("breakpoints"), field + ".breakpoints"),
                                                           std::move(values));
        }
    }
    parse_fail("unreachable signal kind");
}

inline Json vector_json(const Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

}  // namespace detail

inline Json matrix_json(const Matrix& m) { return Json(flatten_row_major(m)); }

inline Json signal_json(const DeterministicSignal& sig) {
    Json out;
    out["kind"] = std::string(to_string(sig.kind()));
    Json params = Json::object();
    switch (sig.kind()) {
        case SignalKind::Zero: break;
        case SignalKind::Constant: params["value"] = detail::vector_json(sig.values().front()); break;
        case SignalKind::ExpDecay:
            params["amplitude"] = detail::vector_json(sig.values().front());
            params["rate"] = sig.rate();
            break;
        case SignalKind::PiecewiseConstant: {
            params["breakpoints"] = sig.breakpoints();
            Json vals = Json::array();
            for (const auto& v : sig.values()) vals.push_back(detail::vector_json(v));
            params["values"] = vals;
            break;
        }
    }
    out["params"] = params;
    return out;
}

inline ProblemSpec problem_from_json(const Json& doc) {
    detail::reject_unknown(doc, {"n", "m", "A", "B", "C", "D", "E", "F", "Q", "S", "R", "q", "r", "b", "sigma", "t0", "x0"},
                           "problem");
    for (const char* f : {"n", "m"}) {
        if (!doc.contains(f) || !doc.at(f).is_number_integer() || doc.at(f).get<long>() <= 0)
            detail::parse_fail(std::string("field '") + f + "' must be a positive integer");
    }
    const auto n = static_cast<Eigen::Index>(doc.at("n").get<long>());
    const auto m = static_cast<Eigen::Index>(doc.at("m").get<long>());
    ProblemData d;
    d.A = detail::matrix_field(doc, "A", n, n, true);
    d.B = detail::matrix_field(doc, "B", n, m, true);
    d.C = detail::matrix_field(doc, "C", n, n, false);
    d.D = detail::matrix_field(doc, "D", n, m, false);
    if (!doc.contains("E")) detail::parse_fail("missing field 'E'");
    d.E = detail::number(doc.at("E"), "E");
    d.F = doc.contains("F") ? detail::number(doc.at("F"), "F") : 0.0;
    d.Q = detail::matrix_field(doc, "Q", n, n, true);
    d.S = detail::matrix_field(doc, "S", m, n, false);
    d.R = detail::matrix_field(doc, "R", m, m, true);
    d.q = detail::signal_field(doc, "q", n);
    d.r = detail::signal_field(doc, "r", m);
    d.b = detail::signal_field(doc, "b", n);
    d.sigma = detail::signal_field(doc, "sigma", n);
    d.t0 = doc.contains("t0") ? detail::number(doc.at("t0"), "t0") : 0.0;
    if (!doc.contains("x0")) detail::parse_fail("missing field 'x0'");
    d.x0 = detail::vector_of(doc.at("x0"), "x0", n);
    return ProblemSpec(std::move(d));
}

inline Json problem_to_json(const ProblemSpec& spec) {
    Json out;
    out["n"] = spec.n();
    out["m"] = spec.m();
    out["A"] = matrix_json(spec.A());
    out["B"] = matrix_json(spec.B());
    out["C"] = matrix_json(spec.C());
    out["D"] = matrix_json(spec.D());
    out["E"] = spec.E();
    out["F"] = spec.F();
    out["Q"] = matrix_json(spec.Q());
    out["S"] = matrix_json(spec.S());
    out["R"] = matrix_json(spec.R());
    out["q"] = signal_json(spec.q());
    out["r"] = signal_json(spec.r());
    out["b"] = signal_json(spec.b());
    out["sigma"] = signal_json(spec.sigma());
    out["t0"] = spec.t0();
    out["x0"] = detail::vector_json(spec.x0());
    return out;
}

inline Json read_json_file(const std::string& path, const char* op = "read_problem") {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cli", op, "cannot open " + path);
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::ParseError, "cli", op, path + ": " + e.what());
    }
}

inline ProblemSpec read_problem(const std::string& path) {
    try {
        return problem_from_json(read_json_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, "cli", "read_problem", path + ": " + e.what());
    }
}

/// Gain file: {"Theta": [row-major m·n]}.
inline Matrix gain_from_json(const Json& doc, Eigen::Index m, Eigen::Index n) {
    detail::reject_unknown(doc, {"Theta"}, "gain file");
    return detail::matrix_field(doc, "Theta", m, n, true);
}

inline Matrix read_gain(const std::string& path, Eigen::Index m, Eigen::Index n) {
    return gain_from_json(read_json_file(path, "read_gain"), m, n);
}

}  // namespace rlq
