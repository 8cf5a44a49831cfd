pub fn ten(p: *mut i32) -> i32 {
    let a = 1;
    let b = 2;
    let c = a + b;
    unsafe {
        *p = c;
    }
    let d = c + 1;
    d
}
