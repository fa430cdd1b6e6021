#include "fedsim/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <string>

#include "fedsim/error.hpp"

namespace fedsim {

namespace {

constexpr std::array<char, 4> kMagic = {'F', 'S', 'P', 'V'};

static_assert(std::endian::native == std::endian::little, "personal model files assume a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is, const char* what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw ParseError(0, std::string("truncated file at ") + what);
  return v;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_field(std::string_view field, std::size_t line, const char* what) {
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw ParseError(line, std::string("malformed ") + what + " '" + std::string(field) + "'");
  return value;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_personal_model(const std::filesystem::path& path, const PersonalModelFile& model) {
  auto out = open_out(path, std::ios::binary);
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kPersonalModelVersion);
  put<std::uint64_t>(out, model.spec_hash);
  put<std::int64_t>(out, model.client_id);
  put<std::int64_t>(out, model.round);
  put<std::uint64_t>(out, model.params.size());
  out.write(reinterpret_cast<const char*>(model.params.values.data()),
            static_cast<std::streamsize>(model.params.size() * sizeof(double)));
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

PersonalModelFile read_personal_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(0, "cannot open '" + path.string() + "'");
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw ParseError(0, "not a personal model file");
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kPersonalModelVersion) throw ParseError(0, "unsupported version " + std::to_string(version));
  PersonalModelFile m;
  m.spec_hash = get<std::uint64_t>(in, "spec hash");
  m.client_id = get<std::int64_t>(in, "client id");
  m.round = get<std::int64_t>(in, "round");
  const auto count = get<std::uint64_t>(in, "count");
  if (count > (std::uint64_t{1} << 32)) throw ParseError(0, "implausible parameter count");
  m.params = ParamVector(static_cast<std::size_t>(count));
  if (!in.read(reinterpret_cast<char*>(m.params.values.data()), static_cast<std::streamsize>(count * sizeof(double))))
    throw ParseError(0, "truncated file at parameters");
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError(0, "trailing bytes after parameters");
  return m;
}

void write_predictions_csv(const std::filesystem::path& path, std::span<const PredictionMatrix> mats) {
  auto out = open_out(path);
  const std::size_t c = mats.empty() ? 0 : mats.front().num_classes();
  out << "round,model_id,example_index";
  for (std::size_t k = 0; k < c; ++k) out << ",p" << k;
  out << '\n';
  for (const auto& m : mats) {
    if (m.num_classes() != c) throw ShapeError("prediction matrices differ in class count");
    for (std::size_t r = 0; r < m.size(); ++r) {
      out << m.round << ',' << m.model_id << ',' << r;
      for (double v : m.rows.row(r)) out << ',' << format_double(v);
      out << '\n';
    }
  }
}

std::vector<PredictionMatrix> read_predictions_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(0, "empty file");
  const auto header = split_commas(line);
  if (header.size() < 4 || header[0] != "round" || header[1] != "model_id" || header[2] != "example_index")
    throw SchemaError(1, "expected header 'round,model_id,example_index,p0,...'");
  const std::size_t c = header.size() - 3;

  std::vector<PredictionMatrix> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_commas(line);
    if (f.size() != header.size())
      throw SchemaError(line_no, "expected " + std::to_string(header.size()) + " columns, got " + std::to_string(f.size()));
    const auto round = parse_field<std::size_t>(f[0], line_no, "round");
    const auto model = parse_field<int>(f[1], line_no, "model_id");
    const auto index = parse_field<std::size_t>(f[2], line_no, "example_index");
    if (out.empty() || out.back().round != round || out.back().model_id != model) {
      out.push_back({Matrix(0, c), model, round});
    }
    if (index != out.back().size()) throw SchemaError(line_no, "example_index out of sequence");
    std::vector<double> row(c);
    for (std::size_t k = 0; k < c; ++k) row[k] = parse_field<double>(f[3 + k], line_no, "probability");
    out.back().rows.append_row(row);
  }
  return out;
}

void write_scores_csv(const std::filesystem::path& path, std::span<const ScoredRow> rows) {
  auto out = open_out(path);
  out << "example_index,score,label_pred,true_label\n";
  for (const auto& r : rows)
    out << r.example_index << ',' << format_double(r.score) << ',' << (r.predicted_anomaly ? "anomaly" : "normal")
        << ',' << (r.true_anomaly ? "anomaly" : "normal") << '\n';
}

}  // namespace fedsim
