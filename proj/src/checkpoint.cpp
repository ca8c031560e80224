#include "cbm/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "cbm/binio.hpp"

namespace cbm::harness {

namespace {

using namespace cbm::binio;

constexpr char kMagic[8] = {'C', 'B', 'M', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void put_tensor(std::ostream& os, const std::string& name, const std::vector<int>& shape,
                const std::vector<double>& data) {
  put_str(os, name);
  put_u32(os, static_cast<std::uint32_t>(shape.size()));
  for (int d : shape) put_i64(os, d);
  put_u64(os, data.size());
  for (double v : data) put_f64(os, v);
}

void get_tensor(std::istream& is, std::string& name, std::vector<int>& shape, std::vector<double>& data) {
  name = get_str(is);
  shape.clear();
  const std::uint32_t rank = get_u32(is);
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int>(get_i64(is)));
  data.assign(get_u64(is), 0.0);
  for (double& v : data) v = get_f64(is);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  if (ckpt.adam.m.size() != ckpt.params.items.size() || ckpt.adam.v.size() != ckpt.params.items.size())
    throw std::invalid_argument("save_checkpoint: optimizer state does not match parameters");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open '" + path + "'");
  os.write(kMagic, 8);
  put_u32(os, kVersion);
  put_u64(os, ckpt.seed);
  put_i64(os, ckpt.next_epoch);
  put_f64(os, ckpt.lr);
  put_f64(os, ckpt.plateau_best);
  put_i64(os, ckpt.plateau_stall);
  put_i64(os, ckpt.adam_step);
  put_str(os, ckpt.config_text);
  put_u32(os, static_cast<std::uint32_t>(ckpt.params.items.size()));
  for (std::size_t i = 0; i < ckpt.params.items.size(); ++i) {
    const ParamTensor& p = ckpt.params.items[i];
    put_tensor(os, p.name, p.shape, p.value);
    put_tensor(os, "adam.m." + p.name, p.shape, ckpt.adam.m[i]);
    put_tensor(os, "adam.v." + p.name, p.shape, ckpt.adam.v[i]);
  }
  put_u64(os, ckpt.store.entries().size());
  for (const auto& [key, entry] : ckpt.store.entries()) {
    const auto& [seq, layer, t] = key;
    put_i64(os, seq);
    put_i64(os, layer);
    put_i64(os, t);
    put_u32(os, static_cast<std::uint32_t>(entry.shape.size()));
    for (int d : entry.shape) put_i64(os, d);
    put_u64(os, entry.value.size());
    for (double v : entry.value) put_f64(os, v);
  }
  if (!os) throw std::runtime_error("save_checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_checkpoint: '" + path + "' is not a checkpoint");
  if (get_u32(is) != kVersion) throw std::runtime_error("load_checkpoint: unsupported checkpoint version");
  Checkpoint ckpt;
  ckpt.seed = get_u64(is);
  ckpt.next_epoch = get_i64(is);
  ckpt.lr = get_f64(is);
  ckpt.plateau_best = get_f64(is);
  ckpt.plateau_stall = get_i64(is);
  ckpt.adam_step = get_i64(is);
  ckpt.config_text = get_str(is);
  const std::uint32_t n = get_u32(is);
  for (std::uint32_t i = 0; i < n; ++i) {
    ParamTensor p;
    get_tensor(is, p.name, p.shape, p.value);
    std::string mname;
    std::vector<int> mshape;
    std::vector<double> m, v;
    get_tensor(is, mname, mshape, m);
    if (mname != "adam.m." + p.name) throw std::runtime_error("load_checkpoint: momentum tensor out of order");
    get_tensor(is, mname, mshape, v);
    if (mname != "adam.v." + p.name) throw std::runtime_error("load_checkpoint: variance tensor out of order");
    ckpt.params.items.push_back(std::move(p));
    ckpt.adam.m.push_back(std::move(m));
    ckpt.adam.v.push_back(std::move(v));
  }
  ckpt.adam.step = ckpt.adam_step;
  const std::uint64_t entries = get_u64(is);
  for (std::uint64_t i = 0; i < entries; ++i) {
    const int seq = static_cast<int>(get_i64(is));
    const int layer = static_cast<int>(get_i64(is));
    const int t = static_cast<int>(get_i64(is));
    std::vector<int> shape;
    const std::uint32_t rank = get_u32(is);
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<int>(get_i64(is)));
    std::vector<double> value(get_u64(is));
    for (double& v : value) v = get_f64(is);
    ckpt.store.publish(seq, layer, t, std::move(shape), std::move(value));
  }
  return ckpt;
}

}  // namespace cbm::harness
