pub fn touch(p: *mut i32) -> i32 {
    // increments through a raw pointer
    let v = unsafe {
        *p
    };
    v + 1
}
