#include "gs/ply_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace gs {

namespace {

std::vector<std::string> property_names(int64_t c_dim) {
  std::vector<std::string> names = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
  for (int64_t k = 0; k < c_dim - 3; ++k) names.push_back("f_rest_" + std::to_string(k));
  names.push_back("opacity");
  for (int k = 0; k < 3; ++k) names.push_back("scale_" + std::to_string(k));
  for (int k = 0; k < 4; ++k) names.push_back("rot_" + std::to_string(k));
  return names;
}

}  // namespace

void export_ply(const std::string& path, const GaussianSet& g) {
  g.validate();
  int64_t n = g.count();
  int64_t c_dim = g.sh_dim();
  std::ofstream f(path, std::ios::binary);
  GS_CHECK(f.good(), "cannot open '" + path + "' for writing");
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\nelement vertex " << n << "\n";
  for (const std::string& name : property_names(c_dim))
    header << "property float " << name << "\n";
  header << "end_header\n";
  std::string h = header.str();
  f.write(h.data(), static_cast<std::streamsize>(h.size()));

  const double* pm = g.mu.data().data();
  const double* ps = g.s.data().data();
  const double* pr = g.r.data().data();
  const double* pa = g.alpha.data().data();
  const double* pc = g.sh.data().data();
  int64_t stride = 6 + c_dim + 1 + 3 + 4;
  std::vector<float> row(static_cast<size_t>(stride));
  for (int64_t i = 0; i < n; ++i) {
    size_t k = 0;
    for (int64_t j = 0; j < 3; ++j) row[k++] = static_cast<float>(pm[i * 3 + j]);
    for (int64_t j = 0; j < 3; ++j) row[k++] = 0.0f;  // normals unused
    for (int64_t j = 0; j < c_dim; ++j) row[k++] = static_cast<float>(pc[i * c_dim + j]);
    double a = std::min(1.0 - 1e-7, std::max(1e-7, pa[i]));
    row[k++] = static_cast<float>(std::log(a / (1.0 - a)));
    for (int64_t j = 0; j < 3; ++j) row[k++] = static_cast<float>(std::log(ps[i * 3 + j]));
    for (int64_t j = 0; j < 4; ++j) row[k++] = static_cast<float>(pr[i * 4 + j]);
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size() * 4));
  }
  GS_CHECK(f.good(), "write to '" + path + "' failed");
}

GaussianSet import_ply(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  GS_CHECK(f.good(), "cannot open '" + path + "'");
  std::string line;
  GS_CHECK(std::getline(f, line) && line == "ply", "'" + path + "' is not a ply file");
  GS_CHECK(std::getline(f, line) && line == "format binary_little_endian 1.0",
           "'" + path + "': unsupported ply format");
  int64_t n = -1;
  std::vector<std::string> props;
  while (std::getline(f, line)) {
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "comment") continue;
    if (word == "element") {
      std::string kind;
      ls >> kind >> n;
      GS_CHECK(kind == "vertex", "'" + path + "': unsupported element '" + kind + "'");
      continue;
    }
    if (word == "property") {
      std::string type, name;
      ls >> type >> name;
      GS_CHECK(type == "float", "'" + path + "': property '" + name + "' is not float");
      props.push_back(name);
      continue;
    }
    fail("'" + path + "': unexpected header line '" + line + "'");
  }
  GS_CHECK(n >= 1, "'" + path + "': missing or empty vertex element");
  int64_t c_dim = -1;
  for (int64_t cand : {3, 12}) {
    if (props == property_names(cand)) c_dim = cand;
  }
  GS_CHECK(c_dim > 0, "'" + path + "': unsupported property layout");

  int64_t stride = 6 + c_dim + 8;
  std::vector<float> raw(static_cast<size_t>(n * stride));
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  GS_CHECK(f.gcount() == static_cast<std::streamsize>(raw.size() * 4),
           "'" + path + "': truncated payload");

  GaussianSet g;
  g.mu = Tensor::zeros({n, 3});
  g.s = Tensor::zeros({n, 3});
  g.r = Tensor::zeros({n, 4});
  g.alpha = Tensor::zeros({n, 1});
  g.sh = Tensor::zeros({n, c_dim});
  for (int64_t i = 0; i < n; ++i) {
    const float* row = raw.data() + i * stride;
    for (int64_t j = 0; j < 3; ++j) g.mu.data()[i * 3 + j] = row[j];
    for (int64_t j = 0; j < c_dim; ++j) g.sh.data()[i * c_dim + j] = row[6 + j];
    if (c_dim == 12) {
      // clamp band 1 back under band 0 in case f32 rounding nudged it over
      for (int ch = 0; ch < 3; ++ch) {
        double dc = std::fabs(g.sh.data()[i * 12 + ch]);
        for (int k = 0; k < 3; ++k) {
          double& b = g.sh.data()[i * 12 + 3 + ch * 3 + k];
          b = std::min(dc, std::max(-dc, b));
        }
      }
    }
    double op = row[6 + c_dim];
    g.alpha.data()[i] = 1.0 / (1.0 + std::exp(-op));
    for (int64_t j = 0; j < 3; ++j) {
      double s = std::exp(static_cast<double>(row[7 + c_dim + j]));
      g.s.data()[i * 3 + j] = std::min(kScaleMax, std::max(kScaleMin, s));
    }
    double q[4];
    double norm = 0;
    for (int64_t j = 0; j < 4; ++j) {
      q[j] = row[10 + c_dim + j];
      norm += q[j] * q[j];
    }
    norm = std::sqrt(norm);
    GS_CHECK(norm > 1e-12, "'" + path + "': zero quaternion at row " + std::to_string(i));
    for (int64_t j = 0; j < 4; ++j) g.r.data()[i * 4 + j] = q[j] / norm;
  }
  g.validate();
  return g;
}

}  // namespace gs
