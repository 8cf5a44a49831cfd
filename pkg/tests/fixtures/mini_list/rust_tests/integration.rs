use mini_list::list::{list_length, list_node, list_sum, record_push};

#[test]
fn length_and_sum() {
    let mut tail = list_node { value: 2, next: core::ptr::null_mut() };
    let head = list_node { value: 1, next: &mut tail };
    assert_eq!(list_length(&head), 2);
    assert_eq!(list_sum(&head), 3);
}

#[test]
fn push_clamps_at_cap() {
    let first = record_push();
    let second = record_push();
    assert_eq!(second, first + 1);
}
