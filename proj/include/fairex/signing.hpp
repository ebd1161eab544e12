#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairex {

/// Party public key, raw 32 bytes (Ed25519).
using PublicKey = std::array<std::uint8_t, 32>;
using Signature = std::vector<std::uint8_t>;

struct SigningError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Key pair holding the 32-byte private seed alongside the public key.
/// Key generation is deterministic in the seed so simulations replay exactly.
struct KeyPair {
    PublicKey pub{};
    std::array<std::uint8_t, 32> priv{};

    static KeyPair from_seed(std::span<const std::uint8_t, 32> seed);
    static KeyPair from_seed(std::uint64_t seed);
};

Signature sign(const KeyPair& key, std::span<const std::uint8_t> message);
bool verify(const PublicKey& pub, std::span<const std::uint8_t> message, const Signature& sig);

std::string key_to_hex(const PublicKey& pub);

}  // namespace fairex
