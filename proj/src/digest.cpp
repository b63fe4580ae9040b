#include "evidenceflow/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <cctype>
#include <fstream>

#include "evidenceflow/error.hpp"

namespace evidenceflow {

struct Sha256::Impl {
  EVP_MD_CTX* ctx = nullptr;
  ~Impl() { EVP_MD_CTX_free(ctx); }
};

Sha256::Sha256() : impl_(std::make_unique<Impl>()) {
  impl_->ctx = EVP_MD_CTX_new();
  if (!impl_->ctx || EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest init failed");
}

Sha256::~Sha256() = default;
Sha256::Sha256(Sha256&&) noexcept = default;
Sha256& Sha256::operator=(Sha256&&) noexcept = default;

void Sha256::update(std::span<const std::byte> data) {
  if (EVP_DigestUpdate(impl_->ctx, data.data(), data.size()) != 1)
    throw Error("sha256: digest update failed");
}

void Sha256::update(std::string_view data) {
  update(std::as_bytes(std::span(data.data(), data.size())));
}

std::string Sha256::finish() {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(impl_->ctx, md.data(), &len) != 1)
    throw Error("sha256: digest final failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

std::string sha256_files(std::span<const std::filesystem::path> files) {
  Sha256 hash;
  std::array<char, 1 << 16> buf;
  for (const auto& file : files) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot read for hashing", file);
    while (in) {
      in.read(buf.data(), buf.size());
      const auto n = in.gcount();
      if (n > 0) hash.update(std::string_view(buf.data(), std::size_t(n)));
    }
    if (in.bad()) throw IoError("read error while hashing", file);
  }
  return hash.finish();
}

std::string sha256_file(const std::filesystem::path& file) {
  return sha256_files(std::span(&file, 1));
}

DigestCheck verify_digest(std::span<const std::filesystem::path> files,
                          std::string_view expected) {
  DigestCheck check;
  check.actual = sha256_files(files);
  if (expected.size() != check.actual.size()) return check;
  for (std::size_t i = 0; i < expected.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(expected[i])) != check.actual[i]) return check;
  check.match = true;
  return check;
}

}  // namespace evidenceflow
