#include "mvdf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "mvdf/infer.hpp"

namespace mvdf {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'M', 'V', 'D', 'F'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xff;
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xff;
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  MVDF_CHECK(in.good(), "checkpoint: truncated file");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  MVDF_CHECK(in.good(), "checkpoint: truncated file");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
  return v;
}

void put_tensor(std::ostream& out, const std::string& name, const Matf& m) {
  put_u64(out, name.size());
  out.write(name.data(), std::streamsize(name.size()));
  put_u64(out, uint64_t(m.rows()));
  put_u64(out, uint64_t(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i)
    put_u32(out, std::bit_cast<uint32_t>(*(m.data() + i)));
}

void get_tensor(std::istream& in, const std::string& want_name, Matf& m) {
  uint64_t len = get_u64(in);
  MVDF_CHECK(len < 4096, "checkpoint: unreasonable tensor name length");
  std::string name(len, '\0');
  in.read(name.data(), std::streamsize(len));
  MVDF_CHECK(in.good(), "checkpoint: truncated file");
  MVDF_CHECK(name == want_name,
             "checkpoint: expected tensor \"" << want_name << "\", found \"" << name << "\"");
  uint64_t rows = get_u64(in), cols = get_u64(in);
  MVDF_CHECK(rows == uint64_t(m.rows()) && cols == uint64_t(m.cols()),
             "checkpoint: tensor \"" << name << "\" is " << rows << "x" << cols
                                     << ", config expects " << m.rows() << "x" << m.cols());
  for (Eigen::Index i = 0; i < m.size(); ++i)
    *(m.data() + i) = std::bit_cast<float>(get_u32(in));
}

}  // namespace

void save_checkpoint(const std::string& path, Checkpoint& ck) {
  MVDF_CHECK(!ck.has_opt || (ck.opt.m.size() == ck.opt.v.size() &&
                             int64_t(ck.opt.m.size()) > 0),
             "save_checkpoint: optimizer state marked present but empty");

  json meta;
  meta["config"] = run_config_to_json(ck.config);
  meta["step"] = ck.step;
  meta["has_opt"] = ck.has_opt;
  meta["opt_t"] = ck.has_opt ? ck.opt.t : 0;
  meta["weights_hash"] = hash_hex(weights_digest(ck.weights));
  std::string meta_str = meta.dump();

  std::vector<std::pair<std::string, Matf*>> tensors;
  ck.weights.visit([&](const std::string& name, Matf& m) { tensors.push_back({name, &m}); });
  if (ck.has_opt) {
    MVDF_CHECK(ck.opt.m.size() == tensors.size(),
               "save_checkpoint: optimizer state does not match the parameter inventory");
    size_t base = tensors.size();
    for (size_t i = 0; i < base; ++i) tensors.push_back({"opt.m." + tensors[i].first, &ck.opt.m[i]});
    for (size_t i = 0; i < base; ++i) tensors.push_back({"opt.v." + tensors[i].first, &ck.opt.v[i]});
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  MVDF_CHECK(out.good(), "save_checkpoint: cannot open " << path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, meta_str.size());
  out.write(meta_str.data(), std::streamsize(meta_str.size()));
  put_u64(out, tensors.size());
  for (auto& [name, m] : tensors) put_tensor(out, name, *m);
  out.flush();
  MVDF_CHECK(out.good(), "save_checkpoint: write failed for " << path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  MVDF_CHECK(in.good(), "load_checkpoint: cannot open " << path);

  char magic[4];
  in.read(magic, 4);
  MVDF_CHECK(in.good() && std::memcmp(magic, kMagic, 4) == 0,
             "load_checkpoint: " << path << " is not a model checkpoint");
  uint32_t version = get_u32(in);
  MVDF_CHECK(version == kVersion,
             "load_checkpoint: format version " << version << ", expected " << kVersion);

  uint64_t meta_len = get_u64(in);
  MVDF_CHECK(meta_len < (1ull << 20), "load_checkpoint: unreasonable metadata size");
  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), std::streamsize(meta_len));
  MVDF_CHECK(in.good(), "checkpoint: truncated file");

  json meta;
  try {
    meta = json::parse(meta_str);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("load_checkpoint: bad metadata: ") + e.what());
  }

  Checkpoint ck;
  ck.config = run_config_from_json(meta.at("config"));
  ck.step = meta.at("step").get<int64_t>();
  ck.has_opt = meta.at("has_opt").get<bool>();
  ck.weights = zero_weights<float>(ck.config.model);

  std::vector<std::pair<std::string, Matf*>> tensors;
  ck.weights.visit([&](const std::string& name, Matf& m) { tensors.push_back({name, &m}); });
  if (ck.has_opt) {
    ck.opt = make_adam_state(ck.weights);
    ck.opt.t = meta.at("opt_t").get<int64_t>();
    size_t base = tensors.size();
    for (size_t i = 0; i < base; ++i) tensors.push_back({"opt.m." + tensors[i].first, &ck.opt.m[i]});
    for (size_t i = 0; i < base; ++i) tensors.push_back({"opt.v." + tensors[i].first, &ck.opt.v[i]});
  }

  uint64_t count = get_u64(in);
  MVDF_CHECK(count == tensors.size(), "load_checkpoint: file holds " << count << " tensors, config expects "
                                                                     << tensors.size());
  for (auto& [name, m] : tensors) get_tensor(in, name, *m);

  std::string want_hash = meta.at("weights_hash").get<std::string>();
  MVDF_CHECK(hash_hex(weights_digest(ck.weights)) == want_hash,
             "load_checkpoint: weight digest mismatch (corrupt or edited file)");

  in.peek();
  MVDF_CHECK(in.eof(), "load_checkpoint: trailing bytes after the last tensor");
  return ck;
}

}  // namespace mvdf
