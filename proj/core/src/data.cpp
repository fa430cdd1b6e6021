#include "fedsim/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "fedsim/error.hpp"
#include "fedsim/random.hpp"

namespace fedsim {

std::string_view to_string(SkewKind k) {
  switch (k) {
    case SkewKind::feature_shift: return "feature-shift";
    case SkewKind::label_swap: return "label-swap";
    case SkewKind::label_skew: return "label-skew";
  }
  return "?";
}

SkewKind parse_skew_kind(std::string_view s) {
  if (s == "feature-shift") return SkewKind::feature_shift;
  if (s == "label-swap") return SkewKind::label_swap;
  if (s == "label-skew") return SkewKind::label_skew;
  throw ConfigError("federation.skew_kind", "unknown skew kind '" + std::string(s) + "'");
}

void FederationConfig::validate() const {
  auto fail = [](const char* field, const std::string& msg) { throw ConfigError(std::string("federation.") + field, msg); };
  if (num_clusters < 1) fail("num_clusters", "must be at least 1");
  if (num_clients < num_clusters) fail("num_clients", "must be at least num_clusters");
  if (num_classes < 2) fail("num_classes", "must be at least 2");
  if (input_dim < 1) fail("input_dim", "must be at least 1");
  if (num_classes > 2 * input_dim) fail("num_classes", "at most 2 * input_dim classes can be placed");
  if (samples_min < 2) fail("samples_per_client", "must be at least 2");
  if (samples_max < samples_min) fail("samples_per_client", "range max is below min");
  if (test_samples < 1) fail("test_samples_per_client", "must be at least 1");
  if (!(anomaly_fraction >= 0.0 && anomaly_fraction < 1.0)) fail("anomaly_fraction", "must lie in [0, 1)");
  if (!(separation > 0.0)) fail("separation", "must be positive");
  if (!(noise_std > 0.0)) fail("noise_std", "must be positive");
  if (!(dirichlet_alpha > 0.0)) fail("dirichlet_alpha", "must be positive");
  if (public_size < 1) fail("public_size", "must be at least 1");
}

bool ClientData::has_train_anomalies() const noexcept {
  return std::any_of(train_anomaly.begin(), train_anomaly.end(), [](std::uint8_t a) { return a != 0; });
}

namespace {

// Unit axis direction for slot k: +e_k for k < d, then -e_{k-d}.
void add_axis(std::vector<double>& v, std::size_t slot, double scale) {
  const std::size_t d = v.size();
  const double sign = (slot / d) % 2 == 0 ? 1.0 : -1.0;
  v[slot % d] += sign * scale;
}

class Sampler {
 public:
  Sampler(const FederationConfig& c, std::uint64_t seed) : cfg_(c), rng_(seed) {}

  // One example of true class `cls` from planted cluster `cluster`.
  // Returns the observed label (after the cluster's label semantics).
  int draw(std::size_t cluster, std::size_t cls, std::vector<double>& x) {
    x.assign(cfg_.input_dim, 0.0);
    add_axis(x, cls, cfg_.separation);
    if (cfg_.skew == SkewKind::feature_shift && cluster > 0)
      add_axis(x, cfg_.num_classes + cluster - 1, cfg_.separation);
    std::normal_distribution<double> noise(0.0, cfg_.noise_std);
    for (double& v : x) v += noise(rng_);
    if (cfg_.skew == SkewKind::label_swap) return static_cast<int>((cls + cluster) % cfg_.num_classes);
    return static_cast<int>(cls);
  }

  std::size_t uniform_class() {
    return std::uniform_int_distribution<std::size_t>(0, cfg_.num_classes - 1)(rng_);
  }

  std::size_t class_from(const std::vector<double>& prior) {
    return std::discrete_distribution<std::size_t>(prior.begin(), prior.end())(rng_);
  }

  std::vector<double> dirichlet_prior() {
    std::gamma_distribution<double> g(cfg_.dirichlet_alpha, 1.0);
    std::vector<double> p(cfg_.num_classes);
    double total = 0.0;
    for (double& v : p) total += (v = g(rng_));
    if (total <= 0.0) {
      std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
    } else {
      for (double& v : p) v /= total;
    }
    return p;
  }

  // Marks round(fraction * n) random rows as anomalies and pushes them off-manifold.
  std::vector<std::uint8_t> inject_anomalies(Matrix& X) {
    std::vector<std::uint8_t> flags(X.rows, 0);
    const auto count = static_cast<std::size_t>(std::llround(cfg_.anomaly_fraction * static_cast<double>(X.rows)));
    if (count == 0) return flags;
    std::vector<std::size_t> idx(X.rows);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng_);
    const double m = 5.0 * cfg_.noise_std;
    std::uniform_real_distribution<double> u(-m, m);
    for (std::size_t i = 0; i < count; ++i) {
      flags[idx[i]] = 1;
      for (double& v : X.row(idx[i])) v += u(rng_);
    }
    return flags;
  }

  std::size_t sample_count() {
    return std::uniform_int_distribution<std::size_t>(cfg_.samples_min, cfg_.samples_max)(rng_);
  }

  std::size_t uniform_cluster() {
    return std::uniform_int_distribution<std::size_t>(0, cfg_.num_clusters - 1)(rng_);
  }

 private:
  const FederationConfig& cfg_;
  Rng rng_;
};

Batch draw_rows(Sampler& s, std::size_t n, std::size_t cluster, const std::vector<double>* prior, std::size_t dim) {
  Batch b;
  b.X = Matrix(0, dim);
  std::vector<double> x;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = prior ? s.class_from(*prior) : s.uniform_class();
    b.labels.push_back(s.draw(cluster, cls, x));
    b.X.append_row(x);
  }
  return b;
}

}  // namespace

Federation generate_federation(const FederationConfig& config) {
  config.validate();
  Federation fed;
  fed.input_dim = config.input_dim;
  fed.num_classes = config.num_classes;

  for (std::size_t i = 0; i < config.num_clients; ++i) {
    const std::size_t cluster = i % config.num_clusters;
    Sampler s(config, derive_seed(config.seed, {stream::data, i}));
    std::vector<double> prior;
    if (config.skew == SkewKind::label_skew) prior = s.dirichlet_prior();
    const std::vector<double>* p = prior.empty() ? nullptr : &prior;

    ClientData c;
    c.client_id = static_cast<int>(i);
    c.train = draw_rows(s, s.sample_count(), cluster, p, config.input_dim);
    c.test = draw_rows(s, config.test_samples, cluster, p, config.input_dim);
    c.train_anomaly = s.inject_anomalies(c.train.X);
    c.test_anomaly = s.inject_anomalies(c.test.X);
    fed.clients.push_back(std::move(c));
    fed.true_clusters.push_back(static_cast<int>(cluster));
  }
  normalize_weights(fed.clients);

  Sampler pub(config, derive_seed(config.seed, {stream::data, 0xFFFFFFFFULL}));
  fed.public_holdout.X = Matrix(0, config.input_dim);
  std::vector<double> x;
  for (std::size_t i = 0; i < config.public_size; ++i) {
    const std::size_t cluster = pub.uniform_cluster();
    fed.public_holdout.labels.push_back(pub.draw(cluster, pub.uniform_class(), x));
    fed.public_holdout.X.append_row(x);
  }
  return fed;
}

void normalize_weights(std::span<ClientData> clients) {
  double total = 0.0;
  for (const auto& c : clients) total += static_cast<double>(c.size());
  if (total <= 0.0) throw DomainError("federation has no training rows");
  for (auto& c : clients) c.weight = static_cast<double>(c.size()) / total;
}

ClientData strip_anomalies(const ClientData& client) {
  auto keep = [](const Batch& b, const std::vector<std::uint8_t>& flags) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < b.size(); ++r)
      if (flags.empty() || flags[r] == 0) rows.push_back(r);
    return rows;
  };
  ClientData out;
  out.client_id = client.client_id;
  out.weight = client.weight;
  const auto tr = keep(client.train, client.train_anomaly);
  out.train = client.train.select(tr);
  out.train_anomaly.assign(tr.size(), 0);
  out.test = client.test;
  out.test_anomaly = client.test_anomaly;
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

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
T parse_number(std::string_view field, std::size_t line, const char* what) {
  T value{};
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw ParseError(line, std::string("malformed ") + what + " '" + std::string(field) + "'");
  return value;
}

void write_double(std::ostream& os, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  os.write(buf, ptr - buf);
}

}  // namespace

ClientData load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = split_commas(line);
  if (header.size() < 3 || header[0] != "client_id" || header[1] != "label")
    throw ParseError(1, "header must be 'client_id,label,f0,...'");
  const std::size_t dim = header.size() - 2;
  for (std::size_t j = 0; j < dim; ++j)
    if (header[j + 2] != "f" + std::to_string(j))
      throw ParseError(1, "expected header column 'f" + std::to_string(j) + "'");

  ClientData c;
  c.train.X = Matrix(0, dim);
  std::vector<double> row(dim);
  std::size_t lineno = 1;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != dim + 2)
      throw SchemaError(lineno, "expected " + std::to_string(dim) + " features, found " +
                                    std::to_string(fields.size() < 2 ? 0 : fields.size() - 2));
    const int id = parse_number<int>(fields[0], lineno, "client_id");
    const int label = parse_number<int>(fields[1], lineno, "label");
    for (std::size_t j = 0; j < dim; ++j) {
      row[j] = parse_number<double>(fields[j + 2], lineno, "feature");
      if (std::isnan(row[j])) throw ParseError(lineno, "NaN feature value");
    }
    if (first) {
      c.client_id = id;
      first = false;
    } else if (id != c.client_id) {
      throw SchemaError(lineno, "client_id " + std::to_string(id) + " differs from " + std::to_string(c.client_id));
    }
    c.train.labels.push_back(label);
    c.train.X.append_row(row);
  }
  if (c.train.size() == 0) throw ParseError(0, "no data rows");
  c.train_anomaly.assign(c.train.size(), 0);
  c.weight = 1.0;
  return c;
}

void save_csv(int client_id, const Batch& rows, const std::filesystem::path& path) {
  if (rows.labels.size() != rows.size()) throw ShapeError("CSV rows need one label per example");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "client_id,label";
  for (std::size_t j = 0; j < rows.X.cols; ++j) out << ",f" << j;
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << client_id << ',' << rows.labels[r];
    for (double v : rows.X.row(r)) {
      out << ',';
      write_double(out, v);
    }
    out << '\n';
  }
}

}  // namespace fedsim
