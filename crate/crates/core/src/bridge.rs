//! Client side of the reconstruction bridge.
//!
//! A request is one `RGDA` raw tensor frame; the reply is either an `RGB0`
//! frame of the same size or an error frame: magic `ERR0`, a little-endian
//! u32 byte length and a UTF-8 message, after which the server closes the
//! connection. Endpoints are `host:port`, `tcp://host:port` or
//! `unix:/path/to/socket`.

use std::fmt;
use std::io::{self, BufReader, BufWriter, Cursor, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::str::FromStr;
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::frame::{ColorImage, FrameRGBDA};
use crate::io::tensor::{
    read_raw_tensor, write_raw_tensor, write_rgbda_tensor, RawTensorFrame, TensorError, MAGIC_RGB,
};

pub const MAGIC_ERROR: [u8; 4] = *b"ERR0";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_millis(500);
const MAX_ERROR_LEN: u32 = 1 << 16;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("bad endpoint \"{0}\" (expected host:port, tcp://host:port or unix:path)")]
    BadEndpoint(String),
    #[error("cannot reach {endpoint}: {source}")]
    Connect { endpoint: String, source: io::Error },
    #[error("bridge i/o: {0}")]
    Io(#[from] io::Error),
    #[error("bridge framing: {0}")]
    Framing(#[from] TensorError),
    #[error("server error: {0}")]
    Server(String),
    #[error("reply is {got:?}, expected RGB0 {width}x{height}")]
    UnexpectedReply {
        got: ([u8; 4], u32, u32),
        width: u32,
        height: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(String),
    Unix(PathBuf),
}

impl FromStr for Endpoint {
    type Err = BridgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(path) = s.strip_prefix("unix:") {
            if path.is_empty() {
                return Err(BridgeError::BadEndpoint(s.to_string()));
            }
            return Ok(Self::Unix(PathBuf::from(path)));
        }
        let addr = s.strip_prefix("tcp://").unwrap_or(s);
        match addr.rsplit_once(':') {
            Some((host, port)) if !host.is_empty() && port.parse::<u16>().is_ok() => {
                Ok(Self::Tcp(addr.to_string()))
            }
            _ => Err(BridgeError::BadEndpoint(s.to_string())),
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Tcp(a) => write!(f, "tcp://{a}"),
            Self::Unix(p) => write!(f, "unix:{}", p.display()),
        }
    }
}

trait Stream: Read + Write {}
impl<T: Read + Write> Stream for T {}

/// Sends frames to a reconstruction service, one connection per request.
#[derive(Debug, Clone)]
pub struct BridgeClient {
    pub endpoint: Endpoint,
    /// Applies to connecting and to every read and write.
    pub timeout: Duration,
}

impl BridgeClient {
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self, BridgeError> {
        Ok(Self {
            endpoint: endpoint.parse()?,
            timeout,
        })
    }

    fn connect(&self) -> Result<Box<dyn Stream>, BridgeError> {
        let fail = |source| BridgeError::Connect {
            endpoint: self.endpoint.to_string(),
            source,
        };
        match &self.endpoint {
            Endpoint::Tcp(addr) => {
                let addrs: Vec<_> = addr.to_socket_addrs().map_err(fail)?.collect();
                let mut last = io::Error::new(io::ErrorKind::NotFound, "no address");
                for a in addrs {
                    match TcpStream::connect_timeout(&a, self.timeout) {
                        Ok(s) => {
                            s.set_read_timeout(Some(self.timeout))?;
                            s.set_write_timeout(Some(self.timeout))?;
                            s.set_nodelay(true)?;
                            return Ok(Box::new(s));
                        }
                        Err(e) => last = e,
                    }
                }
                Err(fail(last))
            }
            #[cfg(unix)]
            Endpoint::Unix(path) => {
                let s = std::os::unix::net::UnixStream::connect(path).map_err(fail)?;
                s.set_read_timeout(Some(self.timeout))?;
                s.set_write_timeout(Some(self.timeout))?;
                Ok(Box::new(s))
            }
            #[cfg(not(unix))]
            Endpoint::Unix(_) => Err(fail(io::Error::new(
                io::ErrorKind::Unsupported,
                "unix sockets are not available on this platform",
            ))),
        }
    }

    /// Round-trips one frame and returns the reconstructed image.
    pub fn reconstruct(&self, frame: &FrameRGBDA) -> Result<ColorImage, BridgeError> {
        let mut stream = self.connect()?;
        {
            let mut w = BufWriter::new(&mut stream);
            write_rgbda_tensor(&mut w, frame)?;
            w.flush()?;
        }
        let reply = read_reply(BufReader::new(&mut stream))?;
        let h = reply.header;
        if h.magic != MAGIC_RGB
            || h.width as usize != frame.width
            || h.height as usize != frame.height
        {
            return Err(BridgeError::UnexpectedReply {
                got: (h.magic, h.width, h.height),
                width: frame.width as u32,
                height: frame.height as u32,
            });
        }
        Ok(reply.to_color()?)
    }
}

/// Reads an `RGB0`/`RGDA` frame, or turns an error frame into
/// [`BridgeError::Server`].
pub fn read_reply<R: Read>(mut r: R) -> Result<RawTensorFrame, BridgeError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => BridgeError::Framing(TensorError::ShortRead("magic")),
        _ => BridgeError::Io(e),
    })?;
    if magic == MAGIC_ERROR {
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let len = u32::from_le_bytes(len).min(MAX_ERROR_LEN);
        let mut msg = vec![0u8; len as usize];
        r.read_exact(&mut msg)?;
        return Err(BridgeError::Server(
            String::from_utf8_lossy(&msg).into_owned(),
        ));
    }
    Ok(read_raw_tensor(Cursor::new(magic).chain(r))?)
}

pub fn write_error_frame<W: Write>(w: &mut W, message: &str) -> io::Result<()> {
    let bytes = &message.as_bytes()[..message.len().min(MAX_ERROR_LEN as usize)];
    w.write_all(&MAGIC_ERROR)?;
    w.write_all(&(bytes.len() as u32).to_le_bytes())?;
    w.write_all(bytes)?;
    w.flush()
}

/// Serves requests on one connection until the peer hangs up. A malformed
/// request or a handler failure gets an error frame and ends the
/// connection.
pub fn serve_connection<S, F>(stream: S, handler: &F) -> io::Result<()>
where
    S: Read + Write,
    F: Fn(&RawTensorFrame) -> Result<ColorImage, String>,
{
    let mut stream = stream;
    loop {
        let mut first = [0u8; 1];
        if stream.read(&mut first)? == 0 {
            return Ok(());
        }
        let request = match read_raw_tensor(Cursor::new(first).chain(&mut stream)) {
            Ok(f) => f,
            Err(e) => return write_error_frame(&mut stream, &e.to_string()),
        };
        match handler(&request) {
            Ok(image) => {
                let mut w = BufWriter::new(&mut stream);
                write_raw_tensor(&mut w, &RawTensorFrame::from_color(&image))?;
                w.flush()?;
            }
            Err(msg) => return write_error_frame(&mut stream, &msg),
        }
    }
}

/// Handler that replies with the request's color planes.
pub fn echo_handler(request: &RawTensorFrame) -> Result<ColorImage, String> {
    let h = request.header;
    let (r, g, b) = (request.plane(0), request.plane(1), request.plane(2));
    Ok(ColorImage {
        width: h.width as usize,
        height: h.height as usize,
        data: (0..h.plane_len()).map(|i| [r[i], g[i], b[i]]).collect(),
    })
}

/// Starts a background TCP echo service on a free local port and returns its
/// endpoint. Useful for exercising the protocol without the network.
pub fn spawn_echo_server() -> io::Result<String> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    thread::spawn(move || {
        for conn in listener.incoming().flatten() {
            thread::spawn(move || {
                let _ = serve_connection(conn, &echo_handler);
            });
        }
    });
    Ok(addr.to_string())
}
