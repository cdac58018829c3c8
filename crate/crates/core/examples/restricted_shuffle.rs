//! Within-level shuffling: every permutation keeps each confounder level's
//! responses inside that level, and small cases can be enumerated.

use permconf::shuffle::{count_restricted, enumerate_restricted, restricted_shuffle, standard_shuffle, RngStream};

fn main() -> permconf::Result<()> {
    let y = ["a1", "a2", "a3", "b1", "b2"];
    let c = [0u32, 0, 0, 1, 1];
    for i in 0..3 {
        println!("restricted {:?}", restricted_shuffle(&y, &c, RngStream::new(7, i))?);
    }
    println!("standard   {:?}", standard_shuffle(&y, RngStream::new(7, 0))?);
    println!("{} restricted permutations:", count_restricted(&c));
    for p in enumerate_restricted(&y, &c, 100)? {
        println!("  {p:?}");
    }
    Ok(())
}
