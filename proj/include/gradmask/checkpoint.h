#ifndef GRADMASK_CHECKPOINT_H_
#define GRADMASK_CHECKPOINT_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gradmask/agmr.h"
#include "gradmask/victim_ppo.h"

namespace gradmask {

// File layout:
//
//   GRADMASK-CHECKPOINT\n
//   version 1\n
//   role <victim|adversary>\n
//   nets <count>\n
//   per net:  net <name> <head>\n  layers <count>\n  dense <out> <in>\n...
//             log_std <length>\n
//   payload <float count>\n
//   <float32 little-endian values>
//   \nchecksum <8 hex digits>\n
//
// Payload order per net: each layer's weight row-major, then its bias, then
// log_std. The checksum is CRC-32 over every byte before "\nchecksum".
// Values are stored as 32-bit floats, so loading yields the float-rounded
// parameters.
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::string role;
  std::vector<std::pair<std::string, MlpParams>> nets;

  // Throws CheckpointError when the net is absent.
  const MlpParams& Get(const std::string& name) const;
};

std::string SerializeCheckpoint(const Checkpoint& ckpt);
// Throws CheckpointError on a bad tag, version, manifest or checksum.
Checkpoint ParseCheckpoint(const std::string& bytes);

// Throws CheckpointError naming the path when it cannot be read or written.
void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint LoadCheckpoint(const std::string& path);

Checkpoint MakeVictimCheckpoint(const VictimAgent& agent);
VictimAgent VictimFromCheckpoint(const Checkpoint& ckpt);
Checkpoint MakeAdversaryCheckpoint(const Adversary& adversary);
Adversary AdversaryFromCheckpoint(const Checkpoint& ckpt);

// Rounds every parameter through float32, as a save/load would.
MlpParams RoundToStorage(const MlpParams& params);

std::uint32_t Crc32(const std::string& bytes);
// SHA-1 of "blob <size>\0" + bytes, as git hashes file contents.
std::string GitBlobHash(const std::string& bytes);

}  // namespace gradmask

#endif  // GRADMASK_CHECKPOINT_H_
