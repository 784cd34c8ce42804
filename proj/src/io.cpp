#include "narxmpc/io.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include <openssl/evp.h>

namespace narxmpc {

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  return in;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, sep)) {
    if (!item.empty() && item.back() == '\r') item.pop_back();
    out.push_back(item);
  }
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string join_vec(const Vec& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

Vec parse_vec(const std::string& key, const std::string& s) {
  const auto parts = split(s, ',');
  Vec v(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto r = std::from_chars(parts[i].data(), parts[i].data() + parts[i].size(), v[i]);
    if (r.ec != std::errc()) throw IoError(key + ": malformed number '" + parts[i] + "'");
  }
  return v;
}

const std::string& require(const KeyValues& kv, const std::string& key, const fs::path& path) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw IoError(path.string() + ": missing key '" + key + "'");
  return it->second;
}

int require_int(const KeyValues& kv, const std::string& key, const fs::path& path) {
  const std::string& v = require(kv, key, path);
  try {
    return std::stoi(v);
  } catch (const std::exception&) {
    throw IoError(path.string() + ": key '" + key + "' is not an integer");
  }
}

KvList dims_and_normalization(const NarxDims& d, const AffineNormalization& nz) {
  return {{"p", std::to_string(d.p)},         {"m", std::to_string(d.m)},
          {"nu", std::to_string(d.nu)},       {"y_ref", join_vec(nz.y_ref())},
          {"u_ref", join_vec(nz.u_ref())},    {"y_scale", join_vec(nz.y_scale())},
          {"u_scale", join_vec(nz.u_scale())}};
}

NarxDims read_dims(const KeyValues& kv, const fs::path& path) {
  return NarxDims::make(require_int(kv, "p", path), require_int(kv, "m", path),
                        require_int(kv, "nu", path));
}

AffineNormalization read_normalization(const KeyValues& kv, const fs::path& path) {
  return {parse_vec("y_ref", require(kv, "y_ref", path)),
          parse_vec("u_ref", require(kv, "u_ref", path)),
          parse_vec("y_scale", require(kv, "y_scale", path)),
          parse_vec("u_scale", require(kv, "u_scale", path))};
}

std::vector<std::string> numbered(const std::string& prefix, int count) {
  std::vector<std::string> out;
  for (int i = 1; i <= count; ++i) out.push_back(prefix + "_" + std::to_string(i));
  return out;
}

void append(std::vector<std::string>& a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
}

// Loads a CSV whose header must equal `expected`.
CsvTable read_checked(const fs::path& path, const std::vector<std::string>& expected) {
  CsvTable t = read_csv(path);
  if (t.header != expected) {
    std::string want;
    for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
    throw IoError(path.string() + ":1: unexpected header (want " + want + ")");
  }
  return t;
}

std::vector<std::string> trace_header(const NarxDims& d) {
  std::vector<std::string> h{"k"};
  append(h, numbered("x", d.n()));
  append(h, numbered("u", d.m));
  append(h, numbered("y", d.p));
  append(h, {"stage_cost", "V", "W", "Y", "grad_norm", "iters", "converged"});
  return h;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw IoError("missing column '" + name + "'");
}

CsvTable read_csv(const fs::path& path) {
  auto in = open_in(path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty file, expected a header");
  for (auto& h : split(line, ',')) {
    const auto b = h.find_first_not_of(' ');
    t.header.push_back(b == std::string::npos ? "" : h.substr(b));
  }
  for (int lineno = 2; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != t.header.size()) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(t.header.size()) + " fields, got " +
                    std::to_string(cells.size()));
    }
    std::vector<double> row(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const std::string& c = cells[i];
      const auto b = c.find_first_not_of(' ');
      const char* first = c.data() + (b == std::string::npos ? c.size() : b);
      const char* last = c.data() + c.size();
      const auto r = std::from_chars(first, last, row[i]);
      if (r.ec != std::errc() || r.ptr != last || first == last) {
        throw IoError(path.string() + ":" + std::to_string(lineno) + ": field " +
                      std::to_string(i + 1) + " ('" + t.header[i] + "') is not a number: '" +
                      c + "'");
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_csv(const fs::path& path, const CsvTable& table) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < table.header.size(); ++i) out << (i ? "," : "") << table.header[i];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

KeyValues read_key_values(const fs::path& path) {
  auto in = open_in(path);
  try {
    return parse_key_values(in, path.string());
  } catch (const ConfigError& e) {
    throw IoError(e.what());
  }
}

void write_key_values(const fs::path& path, const KvList& values) {
  auto out = open_out(path);
  for (const auto& [k, v] : values) out << k << " = " << v << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

fs::path sidecar_path(const fs::path& csv) {
  fs::path p = csv;
  return p.replace_extension(".meta");
}

void write_dataset(const Dataset& data, const fs::path& csv, const KvList& provenance) {
  data.validate();
  CsvTable t;
  t.header = numbered("xi", data.dims.site_dim());
  append(t.header, numbered("y", data.dims.p));
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    std::vector<double> row;
    for (Eigen::Index j = 0; j < data.sites.cols(); ++j) row.push_back(data.sites(i, j));
    for (Eigen::Index j = 0; j < data.targets.cols(); ++j) row.push_back(data.targets(i, j));
    t.rows.push_back(std::move(row));
  }
  write_csv(csv, t);
  KvList meta = dims_and_normalization(data.dims, data.normalization);
  meta.emplace_back("D", std::to_string(data.size()));
  meta.emplace_back("contains_origin", data.contains_origin ? "1" : "0");
  meta.insert(meta.end(), provenance.begin(), provenance.end());
  write_key_values(sidecar_path(csv), meta);
}

Dataset read_dataset(const fs::path& csv) {
  const fs::path meta_path = sidecar_path(csv);
  const KeyValues meta = read_key_values(meta_path);
  Dataset d;
  d.dims = read_dims(meta, meta_path);
  d.normalization = read_normalization(meta, meta_path);
  d.contains_origin = require(meta, "contains_origin", meta_path) == "1";
  std::vector<std::string> header = numbered("xi", d.dims.site_dim());
  append(header, numbered("y", d.dims.p));
  const CsvTable t = read_checked(csv, header);
  if (t.rows.empty()) throw IoError(csv.string() + ": no samples");
  const int sd = d.dims.site_dim();
  d.sites.resize(static_cast<Eigen::Index>(t.rows.size()), sd);
  d.targets.resize(static_cast<Eigen::Index>(t.rows.size()), d.dims.p);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (int j = 0; j < sd; ++j) d.sites(i, j) = t.rows[i][j];
    for (int j = 0; j < d.dims.p; ++j) d.targets(i, j) = t.rows[i][sd + j];
  }
  d.validate();
  return d;
}

void write_model(const KernelInterpolant& model, const fs::path& csv, const KvList& extra) {
  if (model.spec().family != KernelFamily::wendland_deg5) {
    throw IoError("only the Wendland kernel family can be serialized");
  }
  const Dataset& d = model.data();
  CsvTable t;
  t.header = numbered("xi", d.dims.site_dim());
  append(t.header, numbered("y", d.dims.p));
  append(t.header, numbered("alpha", d.dims.p));
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    std::vector<double> row;
    for (Eigen::Index j = 0; j < d.sites.cols(); ++j) row.push_back(d.sites(i, j));
    for (Eigen::Index j = 0; j < d.targets.cols(); ++j) row.push_back(d.targets(i, j));
    for (Eigen::Index j = 0; j < d.targets.cols(); ++j) row.push_back(model.coefficients()(i, j));
    t.rows.push_back(std::move(row));
  }
  write_csv(csv, t);
  KvList meta = dims_and_normalization(d.dims, d.normalization);
  meta.emplace_back("kernel", "wendland_deg5");
  meta.emplace_back("sigma", format_double(model.spec().lengthscale));
  meta.emplace_back("jitter", format_double(model.jitter()));
  meta.emplace_back("D", std::to_string(d.size()));
  meta.emplace_back("contains_origin", d.contains_origin ? "1" : "0");
  meta.insert(meta.end(), extra.begin(), extra.end());
  write_key_values(sidecar_path(csv), meta);
}

KernelInterpolant read_model(const fs::path& csv) {
  const fs::path meta_path = sidecar_path(csv);
  const KeyValues meta = read_key_values(meta_path);
  if (require(meta, "kernel", meta_path) != "wendland_deg5") {
    throw IoError(meta_path.string() + ": unsupported kernel '" + meta.at("kernel") + "'");
  }
  Dataset d;
  d.dims = read_dims(meta, meta_path);
  d.normalization = read_normalization(meta, meta_path);
  d.contains_origin = require(meta, "contains_origin", meta_path) == "1";
  const double sigma = parse_vec("sigma", require(meta, "sigma", meta_path))[0];
  const double jitter = parse_vec("jitter", require(meta, "jitter", meta_path))[0];

  const int sd = d.dims.site_dim(), p = d.dims.p;
  std::vector<std::string> header = numbered("xi", sd);
  append(header, numbered("y", p));
  append(header, numbered("alpha", p));
  const CsvTable t = read_checked(csv, header);
  if (t.rows.empty()) throw IoError(csv.string() + ": no samples");
  const auto D = static_cast<Eigen::Index>(t.rows.size());
  d.sites.resize(D, sd);
  d.targets.resize(D, p);
  Mat alpha(D, p);
  for (Eigen::Index i = 0; i < D; ++i) {
    for (int j = 0; j < sd; ++j) d.sites(i, j) = t.rows[i][j];
    for (int j = 0; j < p; ++j) d.targets(i, j) = t.rows[i][sd + j];
    for (int j = 0; j < p; ++j) alpha(i, j) = t.rows[i][sd + p + j];
  }
  KernelInterpolant model = fit_interpolant(KernelSpec::wendland(sd, sigma), d, jitter);
  const double scale = std::max(1.0, alpha.cwiseAbs().maxCoeff());
  if ((model.coefficients() - alpha).cwiseAbs().maxCoeff() > 1e-6 * scale) {
    throw IoError(csv.string() + ": stored coefficients do not match the refitted model");
  }
  return model;
}

void write_trace(const ClosedLoopTrace& trace, const StorageMatrix& storage,
                 const AffineNormalization& nz, const fs::path& csv, const fs::path& raw_csv) {
  const NarxDims& d = trace.dims;
  CsvTable norm, raw;
  norm.header = raw.header = trace_header(d);
  for (const auto& s : trace.steps) {
    const double W = storage_W(s.x.values(), storage);
    const Vec xr = nz.denormalize_state(s.x.values(), d);
    const Vec ur = nz.denormalize_input(s.u);
    const Vec yr = nz.denormalize_output(s.y);
    std::vector<double> a{static_cast<double>(s.k)}, b{static_cast<double>(s.k)};
    for (Eigen::Index i = 0; i < d.n(); ++i) a.push_back(s.x[i]), b.push_back(xr[i]);
    for (Eigen::Index i = 0; i < d.m; ++i) a.push_back(s.u[i]), b.push_back(ur[i]);
    for (Eigen::Index i = 0; i < d.p; ++i) a.push_back(s.y[i]), b.push_back(yr[i]);
    for (auto* row : {&a, &b}) {
      row->insert(row->end(), {s.stage_cost, s.V, W, s.V + W, s.grad_norm,
                               static_cast<double>(s.iters), s.converged ? 1.0 : 0.0});
    }
    norm.rows.push_back(std::move(a));
    raw.rows.push_back(std::move(b));
  }
  write_csv(csv, norm);
  write_csv(raw_csv, raw);
}

ClosedLoopTrace read_trace(const fs::path& csv, const NarxDims& d) {
  const CsvTable t = read_checked(csv, trace_header(d));
  ClosedLoopTrace trace;
  trace.dims = d;
  const int n = d.n(), m = d.m, p = d.p;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    ClosedLoopStep s;
    s.k = static_cast<int>(row[0]);
    if (s.k != static_cast<int>(r)) {
      throw IoError(csv.string() + ":" + std::to_string(r + 2) + ": steps must be numbered 0, 1, ...");
    }
    Vec x(n), u(m), y(p);
    for (int i = 0; i < n; ++i) x[i] = row[1 + i];
    for (int i = 0; i < m; ++i) u[i] = row[1 + n + i];
    for (int i = 0; i < p; ++i) y[i] = row[1 + n + m + i];
    const std::size_t c = 1 + n + m + p;
    s.x = RegressorState(x, d);
    s.u = u;
    s.y = y;
    s.stage_cost = row[c];
    s.V = row[c + 1];
    s.W = row[c + 2];
    s.grad_norm = row[c + 4];
    s.iters = static_cast<int>(row[c + 5]);
    s.converged = row[c + 6] != 0.0;
    trace.steps.push_back(std::move(s));
  }
  if (!trace.steps.empty()) {
    const auto& last = trace.steps.back();
    trace.terminal = RegressorState(shift_regressor(last.x.values(), last.y, last.u, d), d);
  }
  return trace;
}

std::string sha256_file(const fs::path& path) {
  auto in = open_in(path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 initialization failed");
  }
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return os.str();
}

std::string toolkit_version() { return NARXMPC_VERSION; }

void write_manifest(const fs::path& path, const RunManifest& m) {
  auto out = open_out(path);
  out << "subcommand = " << m.subcommand << '\n'
      << "version = " << m.version << '\n'
      << "config_path = " << m.config_path << '\n'
      << "seed = " << m.seed << '\n'
      << "seconds = " << format_double(m.seconds) << '\n';
  std::istringstream cfg(m.config_text);
  for (std::string line; std::getline(cfg, line);) {
    if (!line.empty()) out << "config." << line << '\n';
  }
  for (const auto& p : m.inputs) out << "input." << p.string() << " = " << sha256_file(p) << '\n';
  for (const auto& p : m.outputs) {
    const fs::path rel = p.lexically_relative(path.parent_path());
    const bool inside = !rel.empty() && *rel.begin() != "..";
    out << "output." << (inside ? rel : p).generic_string() << " = " << sha256_file(p) << '\n';
  }
  for (std::size_t i = 0; i < m.failures.size(); ++i) {
    out << "failure." << i << " = " << m.failures[i] << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace narxmpc
