#include <bit>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>

#include "tge/model.hpp"

namespace tge {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'T', 'G', 'E', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

double get_f64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void put_tensor(std::ostream& out, const std::string& name, std::uint64_t rows,
                std::uint64_t cols, const std::vector<double>& value) {
  put_u64(out, name.size());
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u64(out, 2);  // rank
  put_u64(out, rows);
  put_u64(out, cols);
  out.write(reinterpret_cast<const char*>(value.data()),
            static_cast<std::streamsize>(value.size() * sizeof(double)));
}

}  // namespace

void save_checkpoint(const ModelParams& params, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  const ModelConfig& c = params.cfg;
  put_u64(out, c.d);
  put_u64(out, c.d_e);
  put_u64(out, c.mailbox_slots);
  put_u64(out, c.heads);
  put_u64(out, c.hidden);
  put_f64(out, c.dropout);
  put_f64(out, c.ln_eps);
  put_u64(out, c.scale_full_dim ? 1 : 0);

  const auto tensors = params.all();
  put_u64(out, tensors.size() + (params.edge_proj.empty() ? 0 : 1));
  for (const Parameter* p : tensors) put_tensor(out, p->name, p->rows, p->cols, p->value);
  if (!params.edge_proj.empty())
    put_tensor(out, "edge_proj", c.d_e, c.d, params.edge_proj);
  if (!out) throw std::runtime_error("save_checkpoint: write failed");
}

ModelParams load_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_checkpoint: bad magic");

  ModelConfig cfg;
  cfg.d = get_u64(in);
  cfg.d_e = get_u64(in);
  cfg.mailbox_slots = get_u64(in);
  cfg.heads = get_u64(in);
  cfg.hidden = get_u64(in);
  cfg.dropout = get_f64(in);
  cfg.ln_eps = get_f64(in);
  cfg.scale_full_dim = get_u64(in) != 0;
  if (!in) throw std::runtime_error("load_checkpoint: truncated config block");
  cfg.validate();

  std::mt19937_64 scratch_rng(0);
  ModelParams params = ModelParams::init(cfg, scratch_rng);

  std::map<std::string, Parameter*> by_name;
  for (Parameter* p : params.all()) by_name[p->name] = p;

  bool saw_edge_proj = false;
  const std::uint64_t count = get_u64(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = get_u64(in);
    if (!in || name_len > 4096) throw std::runtime_error("load_checkpoint: bad tensor name");
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    const std::uint64_t rank = get_u64(in);
    if (rank != 2) throw std::runtime_error("load_checkpoint: unsupported rank for " + name);
    const std::uint64_t rows = get_u64(in);
    const std::uint64_t cols = get_u64(in);
    std::vector<double> value(rows * cols);
    in.read(reinterpret_cast<char*>(value.data()),
            static_cast<std::streamsize>(value.size() * sizeof(double)));
    if (!in) throw std::runtime_error("load_checkpoint: truncated tensor " + name);
    if (name == "edge_proj") {
      if (rows != cfg.d_e || cols != cfg.d)
        throw std::runtime_error("load_checkpoint: edge_proj shape mismatch");
      params.edge_proj = std::move(value);
      saw_edge_proj = true;
      continue;
    }
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("load_checkpoint: unknown tensor " + name);
    Parameter* p = it->second;
    if (p->rows != rows || p->cols != cols)
      throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
    p->value = std::move(value);
    by_name.erase(it);
  }
  if (!by_name.empty())
    throw std::runtime_error("load_checkpoint: missing tensor " + by_name.begin()->first);
  if (cfg.d != cfg.d_e && !saw_edge_proj)
    throw std::runtime_error("load_checkpoint: missing edge_proj");
  return params;
}

}  // namespace tge
