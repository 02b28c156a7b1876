// SPDX-License-Identifier: MIT
#pragma once

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ntdseg/error.hpp"
#include "ntdseg/ntd.hpp"
#include "ntdseg/tensor.hpp"

namespace ntdseg {

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline std::vector<double> finite_array(const nlohmann::json& j, const char* field) {
    if (!j.is_array()) {
        throw Error(ErrorKind::parse_error, std::string("field '") + field + "' must be an array");
    }
    std::vector<double> out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) {
            throw Error(ErrorKind::parse_error, std::string("field '") + field + "' index " +
                                                    std::to_string(i) + " is not a number");
        }
        const double v = j[i].get<double>();
        if (!std::isfinite(v)) {
            throw Error(ErrorKind::non_finite, std::string("field '") + field + "' index " +
                                                   std::to_string(i) + " is not finite");
        }
        out.push_back(v);
    }
    return out;
}

inline Matrix matrix_from_json(const nlohmann::json& j, const char* field) {
    if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data")) {
        throw Error(ErrorKind::parse_error,
                    std::string("field '") + field + "' needs rows, cols and data");
    }
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const std::vector<double> data = finite_array(j.at("data"), field);
    if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size()) {
        throw Error(ErrorKind::parse_error, std::string("field '") + field + "' has " +
                                                std::to_string(data.size()) +
                                                " values for a " + std::to_string(rows) + "x" +
                                                std::to_string(cols) + " matrix");
    }
    Matrix m(rows, cols);
    std::size_t n = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[n++];
    return m;
}

}  // namespace detail

inline nlohmann::json model_to_json(const NtdModel& model, const Dims3& dims, const NtdConfig& cfg) {
    nlohmann::json j;
    j["format"] = "ntdseg-model";
    j["version"] = 1;
    j["dims"] = dims;
    j["ranks"] = {model.ranks.f_rank, model.ranks.t_rank, model.ranks.b_rank};
    j["config"] = {
        {"max_outer_iters", cfg.max_outer_iters},
        {"outer_tolerance", cfg.outer_tolerance},
        {"fix_w_to_identity", cfg.fix_w_to_identity},
        {"seed", cfg.seed},
        {"perturb_init", cfg.perturb_init},
        {"factor_solver",
         {{"max_inner_iters", cfg.factor_solver.max_inner_iters},
          {"inner_tolerance", cfg.factor_solver.inner_tolerance},
          {"acceleration_budget", cfg.factor_solver.acceleration_budget}}},
        {"core_solver",
         {{"max_inner_iters", cfg.core_solver.max_inner_iters},
          {"inner_tolerance", cfg.core_solver.inner_tolerance}}},
    };
    j["w"] = detail::matrix_to_json(model.w);
    j["h"] = detail::matrix_to_json(model.h);
    j["q"] = detail::matrix_to_json(model.q);
    j["core"] = {{"dims", model.core.dims()}, {"data", model.core.values()}};
    j["objective_trace"] = model.objective_trace;
    return j;
}

struct LoadedModel {
    NtdModel model;
    Dims3 dims{};
};

inline LoadedModel model_from_json(const nlohmann::json& j) {
    try {
        LoadedModel out;
        out.dims = j.at("dims").get<Dims3>();
        const auto r = j.at("ranks").get<Dims3>();
        out.model.ranks = {r[0], r[1], r[2]};
        out.model.w = detail::matrix_from_json(j.at("w"), "w");
        out.model.h = detail::matrix_from_json(j.at("h"), "h");
        out.model.q = detail::matrix_from_json(j.at("q"), "q");
        const auto core_dims = j.at("core").at("dims").get<Dims3>();
        out.model.core = Tensor3(core_dims, detail::finite_array(j.at("core").at("data"), "core"));
        out.model.objective_trace = detail::finite_array(j.at("objective_trace"), "objective_trace");
        out.model.ranks.validate(out.dims);
        if (core_dims != out.model.ranks.as_dims() ||
            static_cast<std::size_t>(out.model.w.rows()) != out.dims[0] ||
            static_cast<std::size_t>(out.model.h.rows()) != out.dims[1] ||
            static_cast<std::size_t>(out.model.q.rows()) != out.dims[2]) {
            throw Error(ErrorKind::parse_error, "model arrays disagree with dims/ranks");
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse_error, std::string("model document: ") + e.what());
    }
}

inline void save_model(const std::string& path, const NtdModel& model, const Dims3& dims,
                       const NtdConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io_error, "cannot open '" + path + "' for writing");
    out << model_to_json(model, dims, cfg).dump(1) << '\n';
    if (!out) throw Error(ErrorKind::io_error, "failed writing '" + path + "'");
}

inline LoadedModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io_error, "cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse_error, path + ": " + e.what());
    }
    return model_from_json(j);
}

}  // namespace ntdseg
