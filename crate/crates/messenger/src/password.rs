//! Salted PBKDF2-HMAC-SHA256 digests in the form
//! `pbkdf2-sha256$<rounds>$<salt hex>$<hash hex>`.

use pbkdf2::pbkdf2_hmac;
use rand::RngCore;
use sha2::Sha256;

const SCHEME: &str = "pbkdf2-sha256";
const SALT_LEN: usize = 16;
const HASH_LEN: usize = 32;

pub const DEFAULT_ROUNDS: u32 = 100_000;

pub fn hash_password(password: &str, rounds: u32) -> String {
    let mut salt = [0u8; SALT_LEN];
    rand::thread_rng().fill_bytes(&mut salt);
    let mut out = [0u8; HASH_LEN];
    pbkdf2_hmac::<Sha256>(password.as_bytes(), &salt, rounds, &mut out);
    format!("{SCHEME}${rounds}${}${}", hex::encode(salt), hex::encode(out))
}

/// Checks `password` against a digest made by [`hash_password`]. Malformed
/// digests never verify.
pub fn verify_password(password: &str, digest: &str) -> bool {
    let parts: Vec<&str> = digest.split('$').collect();
    let [scheme, rounds, salt, hash] = parts[..] else { return false };
    if scheme != SCHEME {
        return false;
    }
    let (Ok(rounds), Ok(salt), Ok(expected)) = (rounds.parse::<u32>(), hex::decode(salt), hex::decode(hash)) else {
        return false;
    };
    if rounds == 0 || expected.len() != HASH_LEN {
        return false;
    }
    let mut out = [0u8; HASH_LEN];
    pbkdf2_hmac::<Sha256>(password.as_bytes(), &salt, rounds, &mut out);
    out.iter().zip(&expected).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
}
