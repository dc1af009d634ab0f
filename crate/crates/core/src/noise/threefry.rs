//! Threefry-4x64-20 counter-based block function.

const ROTATIONS: [[u32; 2]; 8] = [
    [14, 16],
    [52, 57],
    [23, 40],
    [5, 37],
    [25, 33],
    [46, 12],
    [58, 22],
    [32, 32],
];

const PARITY: u64 = 0x1BD1_1BDA_A9FC_1A22;
const ROUNDS: usize = 20;

#[inline(always)]
fn inject_key(x: &mut [u64; 4], ks: &[u64; 5], s: usize) {
    x[0] = x[0].wrapping_add(ks[s % 5]);
    x[1] = x[1].wrapping_add(ks[(s + 1) % 5]);
    x[2] = x[2].wrapping_add(ks[(s + 2) % 5]);
    x[3] = x[3].wrapping_add(ks[(s + 3) % 5]).wrapping_add(s as u64);
}

/// Encrypts `counter` under `key`; the output block is uniformly distributed
/// and a pure function of its inputs.
pub fn threefry4x64_20(counter: [u64; 4], key: [u64; 4]) -> [u64; 4] {
    let ks = [
        key[0],
        key[1],
        key[2],
        key[3],
        PARITY ^ key[0] ^ key[1] ^ key[2] ^ key[3],
    ];
    let mut x = counter;
    inject_key(&mut x, &ks, 0);
    for round in 0..ROUNDS {
        let [r0, r1] = ROTATIONS[round % 8];
        if round % 2 == 0 {
            x[0] = x[0].wrapping_add(x[1]);
            x[1] = x[1].rotate_left(r0) ^ x[0];
            x[2] = x[2].wrapping_add(x[3]);
            x[3] = x[3].rotate_left(r1) ^ x[2];
        } else {
            x[0] = x[0].wrapping_add(x[3]);
            x[3] = x[3].rotate_left(r0) ^ x[0];
            x[2] = x[2].wrapping_add(x[1]);
            x[1] = x[1].rotate_left(r1) ^ x[2];
        }
        if round % 4 == 3 {
            inject_key(&mut x, &ks, round / 4 + 1);
        }
    }
    x
}
