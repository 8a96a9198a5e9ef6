#include "tailmc/model_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "tailmc/error.hpp"

namespace tailmc {

namespace {

constexpr std::string_view kMagic = "tailmc-model";
constexpr int kVersion = 1;

std::string real(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

double parse_real(const std::string& token, std::size_t line) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError(line, "bad number '" + token + "'");
  }
  return value;
}

std::uint64_t parse_uint(const std::string& token, std::size_t line) {
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError(line, "bad integer '" + token + "'");
  }
  return value;
}

void write_rows(std::ostream& out, std::string_view label, const DenseFactor& f,
                const std::vector<std::uint8_t>& seen) {
  out << label << ' ' << f.rows() << '\n';
  for (std::size_t r = 0; r < f.rows(); ++r) {
    out << static_cast<int>(seen[r]);
    for (double v : f.row(r)) out << ' ' << real(v);
    out << '\n';
  }
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::vector<std::string> next() {
    std::string line;
    if (!std::getline(in_, line)) throw ParseError(line_ + 1, "unexpected end of model");
    ++line_;
    std::istringstream tokens(line);
    std::vector<std::string> out;
    for (std::string t; tokens >> t;) out.push_back(t);
    return out;
  }

  // Next line, which must be `key value`.
  std::string value(std::string_view key) {
    const auto tokens = next();
    if (tokens.size() != 2 || tokens[0] != key) {
      throw ParseError(line_, "expected '" + std::string(key) + " <value>'");
    }
    return tokens[1];
  }

  std::size_t line() const { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

void read_rows(LineReader& reader, std::string_view label, std::size_t rank, DenseFactor& f,
               std::vector<std::uint8_t>& seen) {
  const auto rows = parse_uint(reader.value(label), reader.line());
  f = DenseFactor(rows, rank);
  seen.assign(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto tokens = reader.next();
    if (tokens.size() != rank + 1) throw ParseError(reader.line(), "wrong number of values");
    seen[r] = parse_uint(tokens[0], reader.line()) != 0 ? 1 : 0;
    for (std::size_t j = 0; j < rank; ++j) f(r, j) = parse_real(tokens[j + 1], reader.line());
  }
}

}  // namespace

void write_model(std::ostream& out, const LatentModel& model) {
  model.validate();
  out << kMagic << ' ' << kVersion << '\n';
  out << "kind " << to_string(model.kind) << '\n';
  out << "rank " << model.rank() << '\n';
  out << "reg " << real(model.hyper.reg) << '\n';
  out << "learn_rate " << real(model.hyper.learn_rate) << '\n';
  out << "max_epochs " << model.hyper.max_epochs << '\n';
  out << "patience " << model.hyper.patience << '\n';
  out << "seed " << model.hyper.seed << '\n';
  if (model.trunc) {
    out << "steepness " << real(model.trunc->steepness) << '\n';
    out << "midpoint " << real(model.trunc->midpoint) << '\n';
  }
  if (model.rho) out << "rho " << real(*model.rho) << '\n';
  out << "cdf_epsilon " << real(model.cdf_epsilon) << '\n';
  out << "global_mean " << real(model.global_mean) << '\n';
  write_rows(out, "users", model.users, model.user_seen);
  write_rows(out, "items", model.items, model.item_seen);
}

LatentModel read_model(std::istream& in) {
  LineReader reader(in);
  const auto header = reader.next();
  if (header.size() != 2 || header[0] != kMagic) throw ParseError(1, "not a tailmc model");
  if (parse_uint(header[1], 1) != kVersion) throw ParseError(1, "unsupported model version");

  LatentModel model;
  model.kind = parse_model_kind(reader.value("kind"));
  model.hyper.rank = parse_uint(reader.value("rank"), reader.line());
  model.hyper.reg = parse_real(reader.value("reg"), reader.line());
  model.hyper.learn_rate = parse_real(reader.value("learn_rate"), reader.line());
  model.hyper.max_epochs = parse_uint(reader.value("max_epochs"), reader.line());
  model.hyper.patience = parse_uint(reader.value("patience"), reader.line());
  model.hyper.seed = parse_uint(reader.value("seed"), reader.line());
  if (model.kind == ModelKind::TMF || model.kind == ModelKind::TMFDropout) {
    TruncationConfig t;
    t.steepness = parse_real(reader.value("steepness"), reader.line());
    t.midpoint = parse_real(reader.value("midpoint"), reader.line());
    model.trunc = t;
  }
  if (model.kind == ModelKind::IFWMF) model.rho = parse_real(reader.value("rho"), reader.line());
  model.cdf_epsilon = parse_real(reader.value("cdf_epsilon"), reader.line());
  model.global_mean = parse_real(reader.value("global_mean"), reader.line());
  read_rows(reader, "users", model.hyper.rank, model.users, model.user_seen);
  read_rows(reader, "items", model.hyper.rank, model.items, model.item_seen);
  model.validate();
  return model;
}

void save_model(const std::filesystem::path& path, const LatentModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file " + path.string());
  write_model(out, model);
  if (!out) throw IoError("failed writing " + path.string());
}

LatentModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file " + path.string());
  return read_model(in);
}

}  // namespace tailmc
