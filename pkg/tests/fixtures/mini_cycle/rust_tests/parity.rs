use mini_cycle::core::parity::{is_even, is_odd};
use mini_cycle::util::track::read_checks;

#[test]
fn parity_and_shared_counter() {
    assert_eq!(is_even(4), 1);
    assert_eq!(is_even(5), 0);
    assert_eq!(is_odd(3), 1);
    assert!(read_checks() > 0);
}
