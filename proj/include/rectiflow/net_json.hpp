#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "rectiflow/relu_net.hpp"

namespace rectiflow {

inline constexpr const char* net_format_tag = "rectiflow-net-v1";

/// JSON wire format:
///   { "format": "rectiflow-net-v1", "input_dim": m,
///     "layers": [ { "matrix": [[entry]], "offset": [entry] } ] }
/// where an entry is a JSON number (plain float64 weight) or a string "p/q"
/// (exact rational; the float64 mirror is derived). Layers are homogeneous:
/// exact layers serialize every entry as a string.
inline std::string serialize(const relu_network& net) {
    nlohmann::json j;
    j["format"] = net_format_tag;
    j["input_dim"] = net.input_dim();
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : net.layers()) {
        nlohmann::json jl;
        nlohmann::json matrix = nlohmann::json::array();
        for (std::size_t i = 0; i < l.rows; ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t k = 0; k < l.cols; ++k) {
                if (l.has_exact())
                    row.push_back(l.w_exact[i * l.cols + k].str());
                else
                    row.push_back(l.at(i, k));
            }
            matrix.push_back(std::move(row));
        }
        nlohmann::json offset = nlohmann::json::array();
        for (std::size_t i = 0; i < l.rows; ++i) {
            if (l.has_exact())
                offset.push_back(l.b_exact[i].str());
            else
                offset.push_back(l.b[i]);
        }
        jl["matrix"] = std::move(matrix);
        jl["offset"] = std::move(offset);
        layers.push_back(std::move(jl));
    }
    j["layers"] = std::move(layers);
    return j.dump();
}

inline relu_network deserialize(const std::string& bytes) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes);
    } catch (const nlohmann::json::parse_error& e) {
        throw parse_error(std::string("network json: ") + e.what(), e.byte);
    }
    if (!j.is_object() || !j.contains("format") || !j["format"].is_string())
        throw parse_error("network json: missing format header");
    if (j["format"].get<std::string>() != net_format_tag)
        throw parse_error("network json: unsupported format '" +
                          j["format"].get<std::string>() + "'");
    if (!j.contains("input_dim") || !j["input_dim"].is_number_unsigned())
        throw parse_error("network json: missing input_dim");
    if (!j.contains("layers") || !j["layers"].is_array() || j["layers"].empty())
        throw parse_error("network json: missing layers");

    const std::size_t input_dim = j["input_dim"].get<std::size_t>();
    std::vector<affine_layer> layers;
    std::size_t prev = input_dim;
    for (const auto& jl : j["layers"]) {
        if (!jl.contains("matrix") || !jl["matrix"].is_array() || jl["matrix"].empty() ||
            !jl.contains("offset") || !jl["offset"].is_array())
            throw parse_error("network json: malformed layer");
        const auto& matrix = jl["matrix"];
        const std::size_t rows = matrix.size();
        const std::size_t cols = matrix[0].is_array() ? matrix[0].size() : 0;
        if (cols == 0 || cols != prev)
            throw parse_error("network json: layer column count " + std::to_string(cols) +
                              " does not chain with previous dimension " + std::to_string(prev));
        if (jl["offset"].size() != rows)
            throw parse_error("network json: offset length mismatch");

        bool exact = matrix[0][0].is_string();
        affine_layer l = affine_layer::zeros(rows, cols, exact);
        for (std::size_t i = 0; i < rows; ++i) {
            if (!matrix[i].is_array() || matrix[i].size() != cols)
                throw parse_error("network json: ragged matrix row");
            for (std::size_t k = 0; k < cols; ++k) {
                const auto& e = matrix[i][k];
                if (e.is_string() != exact)
                    throw parse_error("network json: mixed exact/float entries in one layer");
                if (exact)
                    l.set(i, k, rational::parse(e.get<std::string>()));
                else if (e.is_number())
                    l.at(i, k) = e.get<double>();
                else
                    throw parse_error("network json: matrix entry is neither number nor string");
            }
            const auto& o = jl["offset"][i];
            if (o.is_string() != exact)
                throw parse_error("network json: mixed exact/float entries in one layer");
            if (exact)
                l.set_offset(i, rational::parse(o.get<std::string>()));
            else if (o.is_number())
                l.b[i] = o.get<double>();
            else
                throw parse_error("network json: offset entry is neither number nor string");
        }
        prev = rows;
        layers.push_back(std::move(l));
    }
    return relu_network(std::move(layers));
}

}  // namespace rectiflow
