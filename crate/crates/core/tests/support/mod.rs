pub mod two_pair;
