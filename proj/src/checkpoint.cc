#include "gradmask/checkpoint.h"

#include <bit>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/sha.h>
#include <zlib.h>

#include "gradmask/errors.h"

namespace gradmask {
namespace {

constexpr const char* kMagic = "GRADMASK-CHECKPOINT";
constexpr const char* kChecksumTag = "\nchecksum ";

void PutFloat(std::string& out, double v) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

double GetFloat(const std::string& in, std::size_t pos) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) {
    bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return static_cast<double>(std::bit_cast<float>(bits));
}

// Values in payload order for one net.
std::vector<double> PayloadValues(const MlpParams& p) {
  std::vector<double> v;
  for (const DenseLayer& l : p.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) v.push_back(l.weight(r, c));
    }
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) v.push_back(l.bias[i]);
  }
  for (Eigen::Index i = 0; i < p.log_std.size(); ++i) v.push_back(p.log_std[i]);
  return v;
}

std::string ExpectWord(std::istringstream& is, const std::string& word) {
  std::string got;
  if (!(is >> got) || got != word) {
    throw CheckpointError("checkpoint manifest: expected '" + word + "', got '" + got + "'");
  }
  return got;
}

long ReadCount(std::istringstream& is, const std::string& what) {
  long n = -1;
  if (!(is >> n) || n < 0 || n > (1L << 28)) {
    throw CheckpointError("checkpoint manifest: bad " + what);
  }
  return n;
}

std::string Hex32(std::uint32_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(8) << std::setfill('0') << v;
  return os.str();
}

}  // namespace

const MlpParams& Checkpoint::Get(const std::string& name) const {
  for (const auto& [n, p] : nets) {
    if (n == name) return p;
  }
  throw CheckpointError("checkpoint (role " + role + ") has no net '" + name + "'");
}

std::uint32_t Crc32(const std::string& bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

std::string GitBlobHash(const std::string& bytes) {
  const std::string blob = "blob " + std::to_string(bytes.size()) + std::string(1, '\0') + bytes;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(blob.data()), blob.size(), digest);
  std::ostringstream os;
  for (unsigned char c : digest) os << std::hex << std::setw(2) << std::setfill('0') << int{c};
  return os.str();
}

std::string SerializeCheckpoint(const Checkpoint& ckpt) {
  std::ostringstream head;
  head << kMagic << "\nversion " << kCheckpointVersion << "\nrole " << ckpt.role
       << "\nnets " << ckpt.nets.size() << "\n";
  std::string payload;
  long count = 0;
  for (const auto& [name, p] : ckpt.nets) {
    p.Validate();
    head << "net " << name << " " << HeadName(p.head) << "\nlayers " << p.layers.size() << "\n";
    for (const DenseLayer& l : p.layers) {
      head << "dense " << l.weight.rows() << " " << l.weight.cols() << "\n";
    }
    head << "log_std " << p.log_std.size() << "\n";
    for (double v : PayloadValues(p)) {
      PutFloat(payload, v);
      ++count;
    }
  }
  head << "payload " << count << "\n";
  std::string out = head.str() + payload;
  const std::uint32_t sum = Crc32(out);
  out += kChecksumTag + Hex32(sum) + "\n";
  return out;
}

Checkpoint ParseCheckpoint(const std::string& bytes) {
  const std::size_t tag = bytes.rfind(kChecksumTag);
  if (tag == std::string::npos) throw CheckpointError("checkpoint has no checksum");
  const std::string body = bytes.substr(0, tag);
  const std::string stored = bytes.substr(tag + std::string(kChecksumTag).size());
  if (stored != Hex32(Crc32(body)) + "\n") {
    throw CheckpointError("checkpoint checksum mismatch");
  }
  const std::size_t payload_line = body.find("\npayload ");
  if (body.rfind(std::string(kMagic) + "\n", 0) != 0 || payload_line == std::string::npos) {
    throw CheckpointError("not a gradmask checkpoint");
  }
  const std::size_t payload_start = body.find('\n', payload_line + 1) + 1;
  std::istringstream is(body.substr(0, payload_start));

  Checkpoint ckpt;
  std::string word;
  is >> word;
  ExpectWord(is, "version");
  if (ReadCount(is, "version") != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version");
  }
  ExpectWord(is, "role");
  is >> ckpt.role;
  ExpectWord(is, "nets");
  const long nets = ReadCount(is, "net count");
  for (long n = 0; n < nets; ++n) {
    ExpectWord(is, "net");
    std::string name, head;
    is >> name >> head;
    MlpParams p;
    try {
      p.head = ParseHead(head);
    } catch (const std::invalid_argument&) {
      throw CheckpointError("checkpoint has an unknown head '" + head + "'");
    }
    ExpectWord(is, "layers");
    const long layers = ReadCount(is, "layer count");
    for (long l = 0; l < layers; ++l) {
      ExpectWord(is, "dense");
      const long out = ReadCount(is, "layer rows");
      const long in = ReadCount(is, "layer cols");
      p.layers.push_back({Mat::Zero(out, in), Vec::Zero(out)});
    }
    ExpectWord(is, "log_std");
    p.log_std = Vec::Zero(ReadCount(is, "log_std length"));
    ckpt.nets.emplace_back(name, std::move(p));
  }
  ExpectWord(is, "payload");
  const long count = ReadCount(is, "payload count");
  if (body.size() - payload_start != static_cast<std::size_t>(count) * 4) {
    throw CheckpointError("checkpoint payload length does not match its header");
  }

  std::size_t pos = payload_start;
  long used = 0;
  auto next = [&]() {
    if (used >= count) throw CheckpointError("checkpoint manifest exceeds its payload");
    const double v = GetFloat(body, pos);
    pos += 4;
    ++used;
    return v;
  };
  for (auto& [name, p] : ckpt.nets) {
    for (DenseLayer& l : p.layers) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = next();
      }
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = next();
    }
    for (Eigen::Index i = 0; i < p.log_std.size(); ++i) p.log_std[i] = next();
    try {
      p.Validate();
    } catch (const DimensionError& e) {
      throw CheckpointError("checkpoint net '" + name + "' is malformed: " + e.what());
    }
  }
  if (used != count) throw CheckpointError("checkpoint manifest does not cover its payload");
  return ckpt;
}

void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = SerializeCheckpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
    throw CheckpointError("cannot write checkpoint: " + path);
  }
}

Checkpoint LoadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return ParseCheckpoint(ss.str());
  } catch (const CheckpointError& e) {
    throw CheckpointError(path + ": " + e.what());
  }
}

Checkpoint MakeVictimCheckpoint(const VictimAgent& agent) {
  return {"victim", {{"policy", agent.policy}, {"value", agent.value}}};
}

VictimAgent VictimFromCheckpoint(const Checkpoint& ckpt) {
  if (ckpt.role != "victim") {
    throw CheckpointError("expected a victim checkpoint, got role '" + ckpt.role + "'");
  }
  return {ckpt.Get("policy"), ckpt.Get("value")};
}

Checkpoint MakeAdversaryCheckpoint(const Adversary& adversary) {
  return {"adversary", {{"mask", adversary.mask}, {"value", adversary.value}}};
}

Adversary AdversaryFromCheckpoint(const Checkpoint& ckpt) {
  if (ckpt.role != "adversary") {
    throw CheckpointError("expected an adversary checkpoint, got role '" + ckpt.role + "'");
  }
  return {ckpt.Get("mask"), ckpt.Get("value")};
}

MlpParams RoundToStorage(const MlpParams& params) {
  MlpParams p = params;
  auto round = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  for (DenseLayer& l : p.layers) {
    l.weight = l.weight.unaryExpr(round);
    l.bias = l.bias.unaryExpr(round);
  }
  p.log_std = p.log_std.unaryExpr(round);
  return p;
}

}  // namespace gradmask
