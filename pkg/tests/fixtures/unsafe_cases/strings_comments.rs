// unsafe in a comment does not count
pub fn words() -> &'static str {
    let s = "unsafe inside a string";
    /* block comment
       still a comment with the word unsafe
    */
    let long = "line one
line two of a multiline string
";
    let _ = long;
    s
}
