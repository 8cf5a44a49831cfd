pub unsafe fn direct(p: *const i32) -> i32 {
    *p
}
pub fn wrapper(p: *const i32) -> i32 {
    unsafe { direct(p) }
}
