#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>

namespace evidenceflow {

inline constexpr std::string_view kDigestAlgorithm = "sha256";

// Incremental SHA-256.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(Sha256&&) noexcept;
  Sha256& operator=(Sha256&&) noexcept;

  void update(std::span<const std::byte> data);
  void update(std::string_view data);
  // Lowercase hex. The object must not be updated afterwards.
  std::string finish();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Hash of the concatenation of `files`, read in fixed-size blocks.
std::string sha256_files(std::span<const std::filesystem::path> files);
std::string sha256_file(const std::filesystem::path& file);

struct DigestCheck {
  bool match = false;
  std::string actual;
};

// Case-insensitive comparison against `expected`.
DigestCheck verify_digest(std::span<const std::filesystem::path> files,
                          std::string_view expected);

}  // namespace evidenceflow
