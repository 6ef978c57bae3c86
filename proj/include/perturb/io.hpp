#pragma once

// JSON encodings shared by the CLI and the experiment harness.
//
//   matrix: {"n": int, "scalar": "real"|"complex", "entries": [...]}
//           entries are row-major; complex entries are [re, im] pairs.
//   vector: {"len": int, "scalar": ..., "entries": [...]}

#include <filesystem>
#include <string>
#include <variant>

#include <json.hpp>

#include "perturb/matcore.hpp"

namespace perturb::io {

using json = nlohmann::json;

using AnyHermitian = std::variant<HermitianMatrix<double>, HermitianMatrix<Complex>>;

template <class S>
json matrix_to_json(const Mat<S>& m);
template <class S>
json matrix_to_json(const HermitianMatrix<S>& m) { return matrix_to_json(m.dense()); }

// Parses and validates self-adjointness exactly.
AnyHermitian hermitian_from_json(const json& j);

template <class S>
json vector_to_json(const Vec<S>& v);
template <class S>
Vec<S> vector_from_json(const json& j);

json scalar_to_json(double x);
json scalar_to_json(Complex z);

// Accepts an inline JSON document (first non-blank char is '{' or '[') or a
// path to a file containing one.
json load_json_arg(const std::string& arg);
json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace perturb::io
