#include "gs/checkpoint.hpp"

#include <fstream>
#include <sstream>

namespace gs {

namespace {
constexpr const char* kMagic = "GSTENSORS";
constexpr int kVersion = 1;
}  // namespace

void save_tensors(const std::string& path, const NamedTensors& tensors) {
  std::ofstream f(path, std::ios::binary);
  GS_CHECK(f.good(), "cannot open '" + path + "' for writing");
  std::ostringstream manifest;
  manifest << kMagic << " " << kVersion << "\n";
  manifest << "tensors " << tensors.size() << "\n";
  int64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    GS_CHECK(!name.empty() && name.find_first_of(" \n\t") == std::string::npos,
             "tensor name '" + name + "' contains whitespace");
    GS_CHECK(t.defined(), "undefined tensor '" + name + "'");
    manifest << name << " f64 " << t.ndim();
    for (int64_t d : t.shape()) manifest << " " << d;
    manifest << " " << offset << "\n";
    offset += t.numel() * 8;
  }
  manifest << "data\n";
  std::string head = manifest.str();
  f.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (const auto& [name, t] : tensors)
    f.write(reinterpret_cast<const char*>(t.data().data()),
            static_cast<std::streamsize>(t.data().size() * 8));
  GS_CHECK(f.good(), "write to '" + path + "' failed");
}

std::map<std::string, Tensor> load_tensors(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  GS_CHECK(f.good(), "cannot open '" + path + "'");
  std::string magic;
  int version = 0;
  f >> magic >> version;
  GS_CHECK(magic == kMagic, "'" + path + "' is not a tensor container");
  GS_CHECK(version == kVersion, "unsupported container version");
  std::string key;
  size_t count = 0;
  f >> key >> count;
  GS_CHECK(key == "tensors", "malformed manifest in '" + path + "'");
  struct Entry {
    std::string name;
    Shape shape;
    int64_t offset;
  };
  std::vector<Entry> entries;
  entries.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    Entry e;
    std::string dtype;
    int64_t nd = 0;
    f >> e.name >> dtype >> nd;
    GS_CHECK(f.good() && dtype == "f64" && nd >= 0, "malformed manifest entry in '" + path + "'");
    e.shape.resize(static_cast<size_t>(nd));
    for (int64_t d = 0; d < nd; ++d) f >> e.shape[static_cast<size_t>(d)];
    f >> e.offset;
    entries.push_back(std::move(e));
  }
  f >> key;
  GS_CHECK(key == "data", "malformed manifest in '" + path + "'");
  f.get();  // consume the newline before the payload
  std::streampos base = f.tellg();
  std::map<std::string, Tensor> out;
  for (const Entry& e : entries) {
    Tensor t = Tensor::zeros(e.shape);
    f.seekg(base + static_cast<std::streamoff>(e.offset));
    f.read(reinterpret_cast<char*>(t.data().data()),
           static_cast<std::streamsize>(t.data().size() * 8));
    GS_CHECK(f.good(), "truncated payload for '" + e.name + "' in '" + path + "'");
    GS_CHECK(!out.count(e.name), "duplicate tensor '" + e.name + "' in '" + path + "'");
    out[e.name] = t;
  }
  return out;
}

}  // namespace gs
