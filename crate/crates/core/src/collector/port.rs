use std::io::{BufRead, Write};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use super::CollectorError;

/// Pick the meter's serial port. A forced port wins; otherwise `choose`
/// gets the candidates and may return an index, and anything else falls
/// back to the first candidate.
pub fn select_port(
    candidates: &[String],
    forced: Option<&str>,
    choose: impl FnOnce(&[String]) -> Option<usize>,
) -> Result<String, CollectorError> {
    if let Some(port) = forced {
        return Ok(port.to_owned());
    }
    if candidates.is_empty() {
        return Err(CollectorError::NoPorts);
    }
    let index = choose(candidates).filter(|&i| i < candidates.len()).unwrap_or(0);
    Ok(candidates[index].clone())
}

/// Numbered menu on `console`, answered by one line from `input` within
/// `timeout`. Returns a zero-based index, or `None` on timeout or a bad
/// answer.
pub fn prompt_port<R: BufRead + Send + 'static>(
    candidates: &[String],
    console: &mut dyn Write,
    input: R,
    timeout: Duration,
) -> Option<usize> {
    let _ = writeln!(console, "Please select the meter's serial port:");
    for (i, name) in candidates.iter().enumerate() {
        let _ = writeln!(console, "{}: {name}", i + 1);
    }
    let _ = write!(console, "Enter line# [{}s, default 1]: ", timeout.as_secs());
    let _ = console.flush();

    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut input = input;
        let mut line = String::new();
        if input.read_line(&mut line).is_ok() {
            let _ = tx.send(line);
        }
    });
    let answer = match rx.recv_timeout(timeout) {
        Ok(line) => line.trim().parse::<usize>().ok().and_then(|n| n.checked_sub(1)),
        Err(_) => {
            let _ = writeln!(console, "\nNo user response, defaulting");
            None
        }
    };
    if let Some(i) = answer.filter(|&i| i < candidates.len()) {
        let _ = writeln!(console, "Selected {}", candidates[i]);
        Some(i)
    } else {
        let _ = writeln!(console, "Selected {}", candidates.first().map_or("", |s| s.as_str()));
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{self, Cursor, Read};

    fn ports(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn forced_wins() {
        assert_eq!(select_port(&[], Some("COM5"), |_| None).unwrap(), "COM5");
        assert_eq!(select_port(&ports(&["COM4"]), Some("COM5"), |_| Some(0)).unwrap(), "COM5");
    }

    #[test]
    fn defaults_and_errors() {
        assert_eq!(select_port(&ports(&["COM4"]), None, |_| None).unwrap(), "COM4");
        assert_eq!(select_port(&ports(&["COM4", "COM3"]), None, |_| Some(1)).unwrap(), "COM3");
        assert_eq!(select_port(&ports(&["COM4", "COM3"]), None, |_| Some(9)).unwrap(), "COM4");
        assert!(matches!(select_port(&[], None, |_| Some(0)), Err(CollectorError::NoPorts)));
    }

    #[test]
    fn prompt_answers() {
        let mut out = Vec::new();
        let pick = prompt_port(&ports(&["COM4", "COM3"]), &mut out, Cursor::new("2\n"), Duration::from_secs(5));
        assert_eq!(pick, Some(1));
        assert!(String::from_utf8(out).unwrap().contains("2: COM3"));
    }

    struct Never;

    impl Read for Never {
        fn read(&mut self, _: &mut [u8]) -> io::Result<usize> {
            thread::sleep(Duration::from_secs(3600));
            Ok(0)
        }
    }

    #[test]
    fn prompt_times_out() {
        let mut out = Vec::new();
        let input = io::BufReader::new(Never);
        let pick = prompt_port(&ports(&["COM4"]), &mut out, input, Duration::from_millis(50));
        assert_eq!(pick, None);
        assert!(String::from_utf8(out).unwrap().contains("No user response"));
    }
}
