#include "fairex/signing.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <memory>

namespace fairex {

namespace {

struct PkeyDeleter {
    void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
struct CtxDeleter {
    void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
};
using PkeyPtr = std::unique_ptr<EVP_PKEY, PkeyDeleter>;
using CtxPtr = std::unique_ptr<EVP_MD_CTX, CtxDeleter>;

PkeyPtr private_key(const std::array<std::uint8_t, 32>& seed) {
    PkeyPtr key(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed.data(), seed.size()));
    if (!key) throw SigningError("failed to load private key");
    return key;
}

PkeyPtr public_key(const PublicKey& pub) {
    PkeyPtr key(EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, pub.data(), pub.size()));
    if (!key) throw SigningError("failed to load public key");
    return key;
}

}  // namespace

KeyPair KeyPair::from_seed(std::span<const std::uint8_t, 32> seed) {
    KeyPair kp;
    std::memcpy(kp.priv.data(), seed.data(), 32);
    auto key = private_key(kp.priv);
    std::size_t len = kp.pub.size();
    if (EVP_PKEY_get_raw_public_key(key.get(), kp.pub.data(), &len) != 1 || len != 32) {
        throw SigningError("failed to derive public key");
    }
    return kp;
}

KeyPair KeyPair::from_seed(std::uint64_t seed) {
    // splitmix64 expansion of the integer seed into key material.
    std::array<std::uint8_t, 32> bytes{};
    std::uint64_t x = seed;
    for (std::size_t i = 0; i < 4; ++i) {
        x += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        z ^= z >> 31;
        for (std::size_t b = 0; b < 8; ++b) {
            bytes[8 * i + b] = static_cast<std::uint8_t>(z >> (8 * b));
        }
    }
    return from_seed(std::span<const std::uint8_t, 32>(bytes));
}

Signature sign(const KeyPair& key, std::span<const std::uint8_t> message) {
    auto pkey = private_key(key.priv);
    CtxPtr ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, pkey.get()) != 1) {
        throw SigningError("sign init failed");
    }
    std::size_t len = 0;
    if (EVP_DigestSign(ctx.get(), nullptr, &len, message.data(), message.size()) != 1) {
        throw SigningError("sign sizing failed");
    }
    Signature sig(len);
    if (EVP_DigestSign(ctx.get(), sig.data(), &len, message.data(), message.size()) != 1) {
        throw SigningError("sign failed");
    }
    sig.resize(len);
    return sig;
}

bool verify(const PublicKey& pub, std::span<const std::uint8_t> message, const Signature& sig) {
    PkeyPtr pkey;
    try {
        pkey = public_key(pub);
    } catch (const SigningError&) {
        return false;
    }
    CtxPtr ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, pkey.get()) != 1) {
        return false;
    }
    return EVP_DigestVerify(ctx.get(), sig.data(), sig.size(), message.data(), message.size()) == 1;
}

std::string key_to_hex(const PublicKey& pub) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (auto b : pub) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xf]);
    }
    return s;
}

}  // namespace fairex
