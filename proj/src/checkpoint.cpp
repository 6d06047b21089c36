#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "bipc/model.hpp"

namespace bipc::model {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T expect(std::istream& in, const char* what) {
  T value{};
  if (!(in >> value)) throw ContractViolation(std::string("read_checkpoint: malformed ") + what);
  return value;
}

void expect_word(std::istream& in, const std::string& word) {
  if (expect<std::string>(in, word.c_str()) != word)
    throw ContractViolation("read_checkpoint: expected '" + word + "'");
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParamGroups& params) {
  out << "BIPC-PARAMS 1\n";
  for (auto g : {Group::theta, Group::theta_g, Group::theta_h}) {
    const auto& tensors = params.group(g);
    out << "group " << group_name(g) << ' ' << tensors.size() << '\n';
    for (const auto& m : tensors) {
      out << "tensor " << m.rows() << ' ' << m.cols() << '\n';
      for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? " " : "") << format_double(m(r, c));
        out << '\n';
      }
    }
  }
}

ParamGroups read_checkpoint(std::istream& in) {
  expect_word(in, "BIPC-PARAMS");
  if (expect<int>(in, "version") != 1) throw ContractViolation("read_checkpoint: unsupported version");
  ParamGroups params;
  for (auto g : {Group::theta, Group::theta_g, Group::theta_h}) {
    expect_word(in, "group");
    if (parse_group(expect<std::string>(in, "group name")) != g)
      throw ContractViolation("read_checkpoint: groups out of order");
    const auto count = expect<std::size_t>(in, "tensor count");
    auto& tensors = params.group(g);
    for (std::size_t t = 0; t < count; ++t) {
      expect_word(in, "tensor");
      const auto rows = expect<std::size_t>(in, "rows");
      const auto cols = expect<std::size_t>(in, "cols");
      std::vector<double> values(rows * cols);
      for (double& v : values) {
        // operator>> rejects "inf"/"nan", so parse tokens explicitly.
        const auto token = expect<std::string>(in, "value");
        std::size_t used = 0;
        try {
          v = std::stod(token, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != token.size()) throw ContractViolation("read_checkpoint: bad value '" + token + "'");
      }
      tensors.emplace_back(rows, cols, std::move(values));
    }
  }
  return params;
}

}  // namespace bipc::model
