#include "perturb/io.hpp"

#include <fstream>
#include <sstream>

namespace perturb::io {

json scalar_to_json(double x) { return x; }
json scalar_to_json(Complex z) { return json::array({z.real(), z.imag()}); }

namespace {

template <class S>
S scalar_from_json(const json& j) {
  if constexpr (is_complex_v<S>) {
    if (!j.is_array() || j.size() != 2) throw DomainError("complex entry must be [re, im]");
    return Complex(j[0].get<double>(), j[1].get<double>());
  } else {
    if (!j.is_number()) throw DomainError("real entry must be a number");
    return j.get<double>();
  }
}

template <class S>
const char* scalar_name() {
  return is_complex_v<S> ? "complex" : "real";
}

template <class S>
Mat<S> dense_from_json(const json& j) {
  const auto n = j.at("n").get<Index>();
  const json& entries = j.at("entries");
  if (n < 0 || !entries.is_array() || static_cast<Index>(entries.size()) != n * n)
    throw DimensionMismatch("matrix JSON: entries must have n*n elements");
  Mat<S> m(n, n);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c) m(r, c) = scalar_from_json<S>(entries[static_cast<std::size_t>(r * n + c)]);
  return m;
}

}  // namespace

template <class S>
json matrix_to_json(const Mat<S>& m) {
  if (m.rows() != m.cols()) throw DimensionMismatch("matrix JSON: only square matrices");
  json entries = json::array();
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) entries.push_back(scalar_to_json(m(r, c)));
  return json{{"n", m.rows()}, {"scalar", scalar_name<S>()}, {"entries", std::move(entries)}};
}

AnyHermitian hermitian_from_json(const json& j) {
  try {
    const std::string scalar = j.value("scalar", std::string("real"));
    if (scalar == "real") return HermitianMatrix<double>(dense_from_json<double>(j));
    if (scalar == "complex") return HermitianMatrix<Complex>(dense_from_json<Complex>(j));
    throw DomainError("matrix JSON: scalar must be \"real\" or \"complex\"");
  } catch (const json::exception& e) {
    throw DomainError(std::string("matrix JSON: ") + e.what());
  }
}

template <class S>
json vector_to_json(const Vec<S>& v) {
  json entries = json::array();
  for (Index k = 0; k < v.size(); ++k) entries.push_back(scalar_to_json(v(k)));
  return json{{"len", v.size()}, {"scalar", scalar_name<S>()}, {"entries", std::move(entries)}};
}

template <class S>
Vec<S> vector_from_json(const json& j) {
  try {
    if (j.value("scalar", std::string("real")) != scalar_name<S>())
      throw DomainError("vector JSON: scalar type mismatch");
    const json& entries = j.at("entries");
    const auto len = j.value("len", static_cast<Index>(entries.size()));
    if (static_cast<Index>(entries.size()) != len)
      throw DimensionMismatch("vector JSON: len does not match entries");
    Vec<S> v(len);
    for (Index k = 0; k < len; ++k) v(k) = scalar_from_json<S>(entries[static_cast<std::size_t>(k)]);
    return v;
  } catch (const json::exception& e) {
    throw DomainError(std::string("vector JSON: ") + e.what());
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DomainError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

json load_json_arg(const std::string& arg) {
  const auto first = arg.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && (arg[first] == '{' || arg[first] == '[')) {
    try {
      return json::parse(arg);
    } catch (const json::exception& e) {
      throw DomainError(std::string("invalid inline JSON: ") + e.what());
    }
  }
  return read_json_file(arg);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

template json matrix_to_json(const Mat<double>&);
template json matrix_to_json(const Mat<Complex>&);
template json vector_to_json(const Vec<double>&);
template json vector_to_json(const Vec<Complex>&);
template Vec<double> vector_from_json(const json&);
template Vec<Complex> vector_from_json(const json&);

}  // namespace perturb::io
